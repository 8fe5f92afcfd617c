#include "mpmri/volume_archive.hpp"
#include "mpmri/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace mpmri {
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'M', 'P', 'M', 'R', 'I', 'V', 'O', 'L'};

template <typename T>
constexpr ScalarTag tag_of();
template <> constexpr ScalarTag tag_of<std::uint8_t>() { return ScalarTag::UInt8; }
template <> constexpr ScalarTag tag_of<std::int16_t>() { return ScalarTag::Int16; }
template <> constexpr ScalarTag tag_of<float>() { return ScalarTag::Float32; }
template <> constexpr ScalarTag tag_of<double>() { return ScalarTag::Float64; }

template <typename T>
void to_little_endian(const T& v, char* out) {
  std::memcpy(out, &v, sizeof v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(out, out + sizeof v);
}

template <typename T>
T from_little_endian(const char* in) {
  char buf[sizeof(T)];
  std::memcpy(buf, in, sizeof buf);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof buf);
  T v;
  std::memcpy(&v, buf, sizeof v);
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  char buf[sizeof v];
  to_little_endian(v, buf);
  out.write(buf, sizeof buf);
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  char buf[sizeof(T)];
  in.read(buf, sizeof buf);
  if (!in) throw DataError("truncated volume archive " + path.string());
  return from_little_endian<T>(buf);
}

ScalarTag read_header(std::istream& in, const fs::path& path, Shape3& shape, Spacing3& spacing) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError(path.string() + " is not a volume archive");
  for (auto& d : shape) {
    const auto v = get<std::uint64_t>(in, path);
    if (v > (1ull << 32)) throw DataError("implausible extent in " + path.string());
    d = static_cast<Index>(v);
  }
  for (int i = 0; i < 3; ++i) spacing[i] = get<double>(in, path);
  return static_cast<ScalarTag>(get<std::uint8_t>(in, path));
}

}  // namespace

template <typename Scalar>
void write_volume_archive(const Volume<Scalar>& volume, const Spacing3& spacing, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write volume archive " + path.string());
  out.write(kMagic, sizeof kMagic);
  for (Index d : volume.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (int i = 0; i < 3; ++i) put<double>(out, spacing[i]);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(tag_of<Scalar>()));
  std::vector<char> buf(static_cast<std::size_t>(volume.size()) * sizeof(Scalar));
  for (Index i = 0; i < volume.size(); ++i)
    to_little_endian(volume.data()[i], buf.data() + static_cast<std::size_t>(i) * sizeof(Scalar));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("failed writing volume archive " + path.string());
}

template <typename Scalar>
Volume<Scalar> read_volume_archive(const fs::path& path, Spacing3* spacing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open volume archive " + path.string());
  Shape3 shape;
  Spacing3 sp;
  const ScalarTag tag = read_header(in, path, shape, sp);
  if (tag != tag_of<Scalar>()) throw DataError("volume archive " + path.string() + " holds a different scalar type");
  Volume<Scalar> v(shape);
  std::vector<char> buf(static_cast<std::size_t>(v.size()) * sizeof(Scalar));
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in) throw DataError("truncated volume archive " + path.string());
  for (Index i = 0; i < v.size(); ++i)
    v.data()[i] = from_little_endian<Scalar>(buf.data() + static_cast<std::size_t>(i) * sizeof(Scalar));
  if (spacing != nullptr) *spacing = sp;
  return v;
}

ScalarTag archive_scalar_tag(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open volume archive " + path.string());
  Shape3 shape;
  Spacing3 sp;
  return read_header(in, path, shape, sp);
}

template void write_volume_archive<std::uint8_t>(const Volume<std::uint8_t>&, const Spacing3&, const fs::path&);
template void write_volume_archive<std::int16_t>(const Volume<std::int16_t>&, const Spacing3&, const fs::path&);
template void write_volume_archive<float>(const Volume<float>&, const Spacing3&, const fs::path&);
template void write_volume_archive<double>(const Volume<double>&, const Spacing3&, const fs::path&);
template Volume<std::uint8_t> read_volume_archive<std::uint8_t>(const fs::path&, Spacing3*);
template Volume<std::int16_t> read_volume_archive<std::int16_t>(const fs::path&, Spacing3*);
template Volume<float> read_volume_archive<float>(const fs::path&, Spacing3*);
template Volume<double> read_volume_archive<double>(const fs::path&, Spacing3*);

}  // namespace mpmri
