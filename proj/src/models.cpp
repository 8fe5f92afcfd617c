#include "mpmri/models.hpp"

#include <json.hpp>

#include <cstring>

namespace mpmri {
namespace {

constexpr char kWeightsMagic[8] = {'M', 'P', 'M', 'R', 'I', 'W', 'T', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated weights file " + path.string());
  return v;
}

}  // namespace

std::string_view token(Architecture arch) {
  switch (arch) {
    case Architecture::DenseNet121: return "densenet121";
    case Architecture::ResNet50: return "resnet50";
    case Architecture::Tiny: return "tiny";
  }
  return "";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "densenet121") return Architecture::DenseNet121;
  if (text == "resnet50") return Architecture::ResNet50;
  if (text == "tiny") return Architecture::Tiny;
  throw ValidationError("unknown architecture '" + std::string(text) + "'");
}

void ClassifierConfig::validate() const {
  if (in_channels <= 0 || num_classes <= 0 || growth_rate <= 0 || init_features <= 0 || bottleneck_factor <= 0 ||
      tiny_channels <= 0)
    throw ValidationError("classifier dimensions must be positive");
  if (num_classes != kNumLabels && !custom_class_count)
    throw ValidationError("num_classes is " + std::to_string(num_classes) + ", expected " +
                          std::to_string(kNumLabels) + " unless a custom class count is requested");
  for (int n : block_layers)
    if (n <= 0) throw ValidationError("dense block layer counts must be positive");
  for (int n : resnet_blocks)
    if (n <= 0) throw ValidationError("residual stage block counts must be positive");
  if (!(compression > 0.0 && compression <= 1.0)) throw ValidationError("compression must lie in (0, 1]");
  for (Index d : input_shape)
    if (d <= 0) throw ValidationError("input shape must be positive");
}

std::vector<std::string> canonical_class_order() {
  return {kLabelTokens.begin(), kLabelTokens.end()};
}

void save_weights(const ModelState<float>& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write weights file " + path.string());
  out.write(kWeightsMagic, sizeof kWeightsMagic);
  put<std::uint32_t>(out, sizeof(float));
  put<std::uint64_t>(out, state.size());
  for (const auto& m : state) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing weights file " + path.string());
}

ModelState<float> load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weights file " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kWeightsMagic, sizeof magic) != 0)
    throw DataError("not a weights file: " + path.string());
  if (get<std::uint32_t>(in, path) != sizeof(float)) throw DataError("unsupported scalar width in " + path.string());
  const auto count = get<std::uint64_t>(in, path);
  ModelState<float> state;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    nn::Matrix<float> m(static_cast<Index>(rows), static_cast<Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw DataError("truncated weights file " + path.string());
    state.push_back(std::move(m));
  }
  return state;
}

void write_manifest(const CheckpointManifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  const auto& c = m.config;
  j["architecture"] = token(c.architecture);
  j["config"] = {{"in_channels", c.in_channels},
                 {"num_classes", c.num_classes},
                 {"custom_class_count", c.custom_class_count},
                 {"growth_rate", c.growth_rate},
                 {"block_layers", c.block_layers},
                 {"compression", c.compression},
                 {"init_features", c.init_features},
                 {"bottleneck_factor", c.bottleneck_factor},
                 {"resnet_blocks", c.resnet_blocks},
                 {"tiny_channels", c.tiny_channels},
                 {"input_shape", c.input_shape}};
  j["class_order"] = m.class_order;
  j["fold"] = m.fold;
  j["best_val_accuracy"] = m.best_val_accuracy;
  j["best_epoch"] = m.best_epoch;
  j["epochs_run"] = m.epochs_run;
  j["seed"] = m.seed;
  j["parameter_count"] = m.parameter_count;
  j["weights_file"] = m.weights_file;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing manifest " + path.string());
}

CheckpointManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    CheckpointManifest m;
    m.config.architecture = parse_architecture(j.at("architecture").get<std::string>());
    const auto& c = j.at("config");
    m.config.in_channels = c.at("in_channels").get<Index>();
    m.config.num_classes = c.at("num_classes").get<Index>();
    m.config.custom_class_count = c.at("custom_class_count").get<bool>();
    m.config.growth_rate = c.at("growth_rate").get<Index>();
    m.config.block_layers = c.at("block_layers").get<std::array<int, 4>>();
    m.config.compression = c.at("compression").get<double>();
    m.config.init_features = c.at("init_features").get<Index>();
    m.config.bottleneck_factor = c.at("bottleneck_factor").get<Index>();
    m.config.resnet_blocks = c.at("resnet_blocks").get<std::array<int, 4>>();
    m.config.tiny_channels = c.at("tiny_channels").get<Index>();
    m.config.input_shape = c.at("input_shape").get<Shape3>();
    m.class_order = j.at("class_order").get<std::vector<std::string>>();
    m.fold = j.at("fold").get<int>();
    m.best_val_accuracy = j.at("best_val_accuracy").get<double>();
    m.best_epoch = j.at("best_epoch").get<int>();
    m.epochs_run = j.at("epochs_run").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.parameter_count = j.at("parameter_count").get<Index>();
    m.weights_file = j.at("weights_file").get<std::string>();
    m.config.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace mpmri
