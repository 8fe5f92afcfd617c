#pragma once

#include "mpmri/phantom.hpp"
#include "mpmri/training.hpp"

#include <filesystem>
#include <map>
#include <random>
#include <string>

namespace mpmri::test {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mpmri_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::vector<PatientStudies> cohort_of(const std::vector<Study>& studies) {
  std::map<std::string, std::vector<std::string>> by_patient;
  for (const auto& s : studies) by_patient[s.patient_id].push_back(s.study_uid);
  std::vector<PatientStudies> out;
  for (auto& [id, uids] : by_patient) out.push_back({id, uids});
  return out;
}

inline ClassifierConfig tiny_config(Shape3 shape) {
  ClassifierConfig c;
  c.architecture = Architecture::Tiny;
  c.input_shape = shape;
  return c;
}

}  // namespace mpmri::test
