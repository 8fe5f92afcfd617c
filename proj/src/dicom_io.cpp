#include "mpmri/dicom_slice.hpp"
#include "mpmri/errors.hpp"

#include <gdcmAttribute.h>
#include <gdcmDataSet.h>
#include <gdcmFile.h>
#include <gdcmReader.h>
#include <gdcmTransferSyntax.h>
#include <gdcmWriter.h>

#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

namespace mpmri {
namespace {

constexpr const char* kMrImageStorage = "1.2.840.10008.5.1.4.1.1.4";

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  std::size_t first = 0;
  while (first < s.size() && s[first] == ' ') ++first;
  return s.substr(first);
}

std::optional<std::string> string_value(const gdcm::DataSet& ds, const gdcm::Tag& tag) {
  if (!ds.FindDataElement(tag)) return std::nullopt;
  const gdcm::DataElement& de = ds.GetDataElement(tag);
  const gdcm::ByteValue* bv = de.GetByteValue();
  if (bv == nullptr) return std::string{};
  return trim(std::string(bv->GetPointer(), bv->GetLength()));
}

std::string required_string(const gdcm::DataSet& ds, const gdcm::Tag& tag, const char* name) {
  auto value = string_value(ds, tag);
  if (!value || value->empty()) throw DataError(std::string("missing required attribute ") + name);
  return *value;
}

std::vector<double> decimal_values(const std::string& text, const char* name) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '\\')) {
    item = trim(item);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      throw DataError(std::string("malformed decimal string in ") + name + ": '" + text + "'");
    }
  }
  return out;
}

std::vector<double> required_decimals(const gdcm::DataSet& ds, const gdcm::Tag& tag, const char* name,
                                      std::size_t count) {
  auto values = decimal_values(required_string(ds, tag, name), name);
  if (values.size() != count)
    throw DataError(std::string(name) + ": expected " + std::to_string(count) + " values, got " +
                    std::to_string(values.size()));
  return values;
}

template <std::uint16_t Group, std::uint16_t Element>
auto attribute_value(const gdcm::DataSet& ds, const char* name) {
  gdcm::Attribute<Group, Element> attr;
  const gdcm::Tag tag(Group, Element);
  if (!ds.FindDataElement(tag) || ds.GetDataElement(tag).IsEmpty())
    throw DataError(std::string("missing required attribute ") + name);
  attr.SetFromDataSet(ds);
  return attr.GetValue();
}

std::string format_decimal(double v) {
  // DS values are limited to 16 characters.
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  std::string s(buf);
  if (s.size() > 16) {
    std::snprintf(buf, sizeof buf, "%.6g", v);
    s = buf;
  }
  return s;
}

std::string join_decimals(std::initializer_list<double> values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += '\\';
    out += format_decimal(v);
  }
  return out;
}

void put_string(gdcm::DataSet& ds, const gdcm::Tag& tag, const gdcm::VR& vr, std::string value) {
  if (value.size() % 2 != 0) value.push_back(vr == gdcm::VR::UI ? '\0' : ' ');
  gdcm::DataElement de(tag);
  de.SetVR(vr);
  de.SetByteValue(value.data(), static_cast<std::uint32_t>(value.size()));
  ds.Replace(de);
}

// Walks the element structure of a Part 10 byte stream and fails when any
// declared length runs past the end of the file. The decoder aborts on some
// truncated inputs, so files are checked before they reach it.
class StructureCheck {
 public:
  explicit StructureCheck(std::vector<unsigned char> bytes) : b_(std::move(bytes)) {}

  void run() {
    if (b_.size() < 132 || std::memcmp(b_.data() + 128, "DICM", 4) != 0)
      throw DataError("not a DICOM Part 10 file");
    std::size_t pos = 132;
    std::string syntax;
    while (pos + 4 <= b_.size() && u16(pos) == 0x0002) {
      const std::uint16_t element = u16(pos + 2);
      const auto [value, next] = element_span(pos, true);
      if (element == 0x0010) syntax.assign(reinterpret_cast<const char*>(b_.data()) + value, next - value);
      pos = next;
    }
    while (!syntax.empty() && (syntax.back() == '\0' || syntax.back() == ' ')) syntax.pop_back();
    if (syntax == "1.2.840.10008.1.2.1.99") return;  // deflated body, left to the decoder
    walk(pos, b_.size(), syntax != "1.2.840.10008.1.2", false);
  }

 private:
  static constexpr std::uint32_t kUndefined = 0xFFFFFFFFu;

  std::uint16_t u16(std::size_t p) const { return static_cast<std::uint16_t>(b_[p] | (b_[p + 1] << 8)); }
  std::uint32_t u32(std::size_t p) const {
    return static_cast<std::uint32_t>(b_[p]) | (static_cast<std::uint32_t>(b_[p + 1]) << 8) |
           (static_cast<std::uint32_t>(b_[p + 2]) << 16) | (static_cast<std::uint32_t>(b_[p + 3]) << 24);
  }

  [[noreturn]] void truncated(std::size_t at) const {
    throw DataError("truncated DICOM file: element at byte " + std::to_string(at) + " runs past the end (" +
                    std::to_string(b_.size()) + " bytes)");
  }

  void need(std::size_t at, std::size_t from, std::size_t count) const {
    if (from > b_.size() || b_.size() - from < count) truncated(at);
  }

  // Returns (value offset, end offset); an undefined length is walked through.
  std::pair<std::size_t, std::size_t> element_span(std::size_t pos, bool explicit_vr) {
    need(pos, pos, 8);
    const std::uint16_t group = u16(pos);
    std::size_t value = pos + 8;
    std::uint32_t length = 0;
    if (group == 0xFFFE) {
      length = u32(pos + 4);
    } else if (explicit_vr) {
      const char vr[3] = {static_cast<char>(b_[pos + 4]), static_cast<char>(b_[pos + 5]), 0};
      static const char* kLong[] = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"};
      bool long_form = false;
      for (const char* v : kLong) long_form = long_form || std::strcmp(v, vr) == 0;
      if (long_form) {
        need(pos, pos, 12);
        length = u32(pos + 8);
        value = pos + 12;
      } else {
        length = u16(pos + 6);
      }
    } else {
      length = u32(pos + 4);
    }
    // Undefined lengths (sequences, items, encapsulated pixel data) end at a delimiter.
    if (length == kUndefined) return {value, walk(value, b_.size(), explicit_vr, true)};
    need(pos, value, length);
    return {value, value + length};
  }

  // Walks elements in [pos, end); with until_delimiter, stops after a delimitation item.
  std::size_t walk(std::size_t pos, std::size_t end, bool explicit_vr, bool until_delimiter) {
    while (pos < end) {
      need(pos, pos, 8);
      if (u16(pos) == 0xFFFE && (u16(pos + 2) == 0xE00D || u16(pos + 2) == 0xE0DD)) {
        if (until_delimiter) return pos + 8;
        pos += 8;
        continue;
      }
      pos = element_span(pos, explicit_vr).second;
    }
    if (until_delimiter) truncated(pos);
    return pos;
  }

  std::vector<unsigned char> b_;
};

void check_structure(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  StructureCheck(std::move(bytes)).run();
}

}  // namespace

double decimal_string_round_trip(double v) { return std::stod(format_decimal(v)); }

bool has_part10_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[4] = {};
  in.seekg(128);
  in.read(magic, 4);
  return in.gcount() == 4 && std::memcmp(magic, "DICM", 4) == 0;
}

DicomSlice read_dicom_slice(const std::filesystem::path& path) {
  check_structure(path);
  gdcm::Reader reader;
  reader.SetFileName(path.string().c_str());
  if (!reader.Read()) throw DataError("cannot parse DICOM file");

  const gdcm::TransferSyntax ts = reader.GetFile().GetHeader().GetDataSetTransferSyntax();
  if (ts != gdcm::TransferSyntax::ImplicitVRLittleEndian && ts != gdcm::TransferSyntax::ExplicitVRLittleEndian &&
      ts != gdcm::TransferSyntax::DeflatedExplicitVRLittleEndian)
    throw DataError(std::string("unsupported transfer syntax ") + ts.GetString());

  const gdcm::DataSet& ds = reader.GetFile().GetDataSet();
  DicomSlice slice;
  slice.patient_id = string_value(ds, gdcm::Tag(0x0010, 0x0020)).value_or("");
  slice.study_uid = required_string(ds, gdcm::Tag(0x0020, 0x000D), "StudyInstanceUID");
  slice.series_uid = required_string(ds, gdcm::Tag(0x0020, 0x000E), "SeriesInstanceUID");
  slice.sop_instance_uid = string_value(ds, gdcm::Tag(0x0008, 0x0018)).value_or("");
  slice.series_description = string_value(ds, gdcm::Tag(0x0008, 0x103E)).value_or("");
  slice.body_part = string_value(ds, gdcm::Tag(0x0018, 0x0015)).value_or("");

  if (auto n = string_value(ds, gdcm::Tag(0x0020, 0x0013)); n && !n->empty()) {
    auto [ptr, ec] = std::from_chars(n->data(), n->data() + n->size(), slice.instance_number);
    if (ec != std::errc()) throw DataError("malformed InstanceNumber '" + *n + "'");
  }

  auto ipp = required_decimals(ds, gdcm::Tag(0x0020, 0x0032), "ImagePositionPatient", 3);
  slice.image_position = Eigen::Vector3d(ipp[0], ipp[1], ipp[2]);
  auto iop = required_decimals(ds, gdcm::Tag(0x0020, 0x0037), "ImageOrientationPatient", 6);
  for (int i = 0; i < 6; ++i) slice.orientation_cosines[i] = iop[static_cast<std::size_t>(i)];
  auto ps = required_decimals(ds, gdcm::Tag(0x0028, 0x0030), "PixelSpacing", 2);
  slice.pixel_spacing = Eigen::Vector2d(ps[0], ps[1]);

  if (auto sbs = string_value(ds, gdcm::Tag(0x0018, 0x0088)); sbs && !sbs->empty())
    slice.slice_spacing = decimal_values(*sbs, "SpacingBetweenSlices").at(0);
  else if (auto st = string_value(ds, gdcm::Tag(0x0018, 0x0050)); st && !st->empty())
    slice.slice_spacing = decimal_values(*st, "SliceThickness").at(0);

  if (ds.FindDataElement(gdcm::Tag(0x0018, 0x9087)) && !ds.GetDataElement(gdcm::Tag(0x0018, 0x9087)).IsEmpty())
    slice.b_value = attribute_value<0x0018, 0x9087>(ds, "DiffusionBValue");

  if (auto s = string_value(ds, gdcm::Tag(0x0028, 0x1053)); s && !s->empty())
    slice.rescale_slope = decimal_values(*s, "RescaleSlope").at(0);
  if (auto s = string_value(ds, gdcm::Tag(0x0028, 0x1052)); s && !s->empty())
    slice.rescale_intercept = decimal_values(*s, "RescaleIntercept").at(0);

  const int rows = attribute_value<0x0028, 0x0010>(ds, "Rows");
  const int cols = attribute_value<0x0028, 0x0011>(ds, "Columns");
  const int bits = attribute_value<0x0028, 0x0100>(ds, "BitsAllocated");
  int signed_pixels = 0;
  if (ds.FindDataElement(gdcm::Tag(0x0028, 0x0103)))
    signed_pixels = attribute_value<0x0028, 0x0103>(ds, "PixelRepresentation");
  if (ds.FindDataElement(gdcm::Tag(0x0028, 0x0002)) &&
      attribute_value<0x0028, 0x0002>(ds, "SamplesPerPixel") != 1)
    throw DataError("only single-sample (grayscale) images are supported");
  if (bits != 8 && bits != 16) throw DataError("unsupported BitsAllocated " + std::to_string(bits));
  if (rows <= 0 || cols <= 0) throw DataError("empty image matrix");

  const gdcm::Tag pixel_tag(0x7FE0, 0x0010);
  if (!ds.FindDataElement(pixel_tag)) throw DataError("no pixel data");
  const gdcm::ByteValue* bv = ds.GetDataElement(pixel_tag).GetByteValue();
  if (bv == nullptr) throw DataError("encapsulated pixel data is not supported");
  const std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  const std::size_t bytes_per = static_cast<std::size_t>(bits / 8);
  if (bv->GetLength() < count * bytes_per)
    throw DataError("pixel data truncated: " + std::to_string(bv->GetLength()) + " bytes, expected " +
                    std::to_string(count * bytes_per));

  slice.pixels.resize(rows, cols);
  const auto* raw = reinterpret_cast<const unsigned char*>(bv->GetPointer());
  for (std::size_t i = 0; i < count; ++i) {
    std::int32_t v;
    if (bits == 8) {
      v = signed_pixels ? static_cast<std::int8_t>(raw[i]) : raw[i];
    } else {
      const std::uint16_t u = static_cast<std::uint16_t>(raw[2 * i] | (raw[2 * i + 1] << 8));
      v = signed_pixels ? static_cast<std::int16_t>(u) : u;
    }
    slice.pixels.data()[i] = v;
  }
  return slice;
}

void write_dicom_slice(const DicomSlice& slice, const std::filesystem::path& path) {
  if ((slice.pixels.array() < 0).any() || (slice.pixels.array() > 65535).any())
    throw ValidationError("pixel values must fit in 16-bit unsigned storage");

  gdcm::Writer writer;
  gdcm::File& file = writer.GetFile();
  gdcm::DataSet& ds = file.GetDataSet();

  put_string(ds, gdcm::Tag(0x0008, 0x0016), gdcm::VR::UI, kMrImageStorage);
  put_string(ds, gdcm::Tag(0x0008, 0x0018), gdcm::VR::UI, slice.sop_instance_uid);
  put_string(ds, gdcm::Tag(0x0008, 0x0060), gdcm::VR::CS, "MR");
  put_string(ds, gdcm::Tag(0x0008, 0x103E), gdcm::VR::LO, slice.series_description);
  put_string(ds, gdcm::Tag(0x0010, 0x0020), gdcm::VR::LO, slice.patient_id);
  if (!slice.body_part.empty()) put_string(ds, gdcm::Tag(0x0018, 0x0015), gdcm::VR::CS, slice.body_part);
  put_string(ds, gdcm::Tag(0x0018, 0x0050), gdcm::VR::DS, format_decimal(slice.slice_spacing));
  put_string(ds, gdcm::Tag(0x0018, 0x0088), gdcm::VR::DS, format_decimal(slice.slice_spacing));
  if (slice.b_value) {
    gdcm::Attribute<0x0018, 0x9087> b;
    b.SetValue(*slice.b_value);
    ds.Replace(b.GetAsDataElement());
  }
  put_string(ds, gdcm::Tag(0x0020, 0x000D), gdcm::VR::UI, slice.study_uid);
  put_string(ds, gdcm::Tag(0x0020, 0x000E), gdcm::VR::UI, slice.series_uid);
  put_string(ds, gdcm::Tag(0x0020, 0x0013), gdcm::VR::IS, std::to_string(slice.instance_number));
  const auto& p = slice.image_position;
  put_string(ds, gdcm::Tag(0x0020, 0x0032), gdcm::VR::DS, join_decimals({p[0], p[1], p[2]}));
  const auto& o = slice.orientation_cosines;
  put_string(ds, gdcm::Tag(0x0020, 0x0037), gdcm::VR::DS, join_decimals({o[0], o[1], o[2], o[3], o[4], o[5]}));

  const auto rows = static_cast<std::uint16_t>(slice.pixels.rows());
  const auto cols = static_cast<std::uint16_t>(slice.pixels.cols());
  ds.Replace(gdcm::Attribute<0x0028, 0x0002>{1}.GetAsDataElement());
  put_string(ds, gdcm::Tag(0x0028, 0x0004), gdcm::VR::CS, "MONOCHROME2");
  ds.Replace(gdcm::Attribute<0x0028, 0x0010>{rows}.GetAsDataElement());
  ds.Replace(gdcm::Attribute<0x0028, 0x0011>{cols}.GetAsDataElement());
  put_string(ds, gdcm::Tag(0x0028, 0x0030), gdcm::VR::DS,
             join_decimals({slice.pixel_spacing[0], slice.pixel_spacing[1]}));
  ds.Replace(gdcm::Attribute<0x0028, 0x0100>{16}.GetAsDataElement());
  ds.Replace(gdcm::Attribute<0x0028, 0x0101>{16}.GetAsDataElement());
  ds.Replace(gdcm::Attribute<0x0028, 0x0102>{15}.GetAsDataElement());
  ds.Replace(gdcm::Attribute<0x0028, 0x0103>{0}.GetAsDataElement());
  put_string(ds, gdcm::Tag(0x0028, 0x1052), gdcm::VR::DS, format_decimal(slice.rescale_intercept));
  put_string(ds, gdcm::Tag(0x0028, 0x1053), gdcm::VR::DS, format_decimal(slice.rescale_slope));

  std::vector<char> buffer(static_cast<std::size_t>(slice.pixels.size()) * 2);
  for (Eigen::Index i = 0; i < slice.pixels.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(slice.pixels.data()[i]);
    buffer[2 * static_cast<std::size_t>(i)] = static_cast<char>(v & 0xFF);
    buffer[2 * static_cast<std::size_t>(i) + 1] = static_cast<char>(v >> 8);
  }
  gdcm::DataElement pixel_data(gdcm::Tag(0x7FE0, 0x0010));
  pixel_data.SetVR(gdcm::VR::OW);
  pixel_data.SetByteValue(buffer.data(), static_cast<std::uint32_t>(buffer.size()));
  ds.Replace(pixel_data);

  file.GetHeader().SetDataSetTransferSyntax(gdcm::TransferSyntax::ExplicitVRLittleEndian);
  writer.SetFileName(path.string().c_str());
  if (!writer.Write()) throw DataError("cannot write DICOM file " + path.string());
}

}  // namespace mpmri
