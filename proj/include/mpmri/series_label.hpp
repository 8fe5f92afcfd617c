#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mpmri {

/// Sequence type of one axial series. Indices follow the canonical reading order.
enum class SeriesLabel : int {
  T1wPre = 0,
  T1wArt = 1,
  T1wPor = 2,
  T1wDel = 3,
  T2 = 4,
  T2FS = 5,
  DWI = 6,
  ADC = 7,
};

inline constexpr int kNumLabels = 8;

inline constexpr std::array<SeriesLabel, kNumLabels> kAllLabels = {
    SeriesLabel::T1wPre, SeriesLabel::T1wArt, SeriesLabel::T1wPor, SeriesLabel::T1wDel,
    SeriesLabel::T2,     SeriesLabel::T2FS,   SeriesLabel::DWI,    SeriesLabel::ADC};

inline constexpr std::array<std::string_view, kNumLabels> kLabelTokens = {
    "T1w-pre", "T1w-art", "T1w-por", "T1w-del", "T2", "T2FS", "DWI", "ADC"};

// Abbreviations used on confusion-matrix axes.
inline constexpr std::array<std::string_view, kNumLabels> kLabelAbbreviations = {
    "T1w-p", "T1w-a", "T1w-v", "T1w-d", "T2", "T2FS", "DWI", "ADC"};

constexpr int index_of(SeriesLabel label) { return static_cast<int>(label); }

inline SeriesLabel label_from_index(int index) {
  if (index < 0 || index >= kNumLabels)
    throw std::out_of_range("series label index out of range: " + std::to_string(index));
  return static_cast<SeriesLabel>(index);
}

inline std::string_view token(SeriesLabel label) { return kLabelTokens[index_of(label)]; }

inline std::optional<SeriesLabel> parse_label(std::string_view text) {
  for (int i = 0; i < kNumLabels; ++i)
    if (kLabelTokens[i] == text) return static_cast<SeriesLabel>(i);
  return std::nullopt;
}

}  // namespace mpmri
