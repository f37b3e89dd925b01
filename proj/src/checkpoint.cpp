#include "scrl/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace scrl {

namespace {

constexpr char kMagic[5] = {'S', 'C', 'R', 'L', '1'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw ValidationError(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

}  // namespace

nlohmann::json CheckpointHeader::to_json() const {
  return nlohmann::json{{"config", config.to_json()},
                        {"num_nodes", num_nodes},
                        {"num_features", num_features},
                        {"num_classes", num_classes},
                        {"version", version}};
}

CheckpointHeader CheckpointHeader::from_json(const nlohmann::json& j) {
  CheckpointHeader h;
  h.config = TrainConfig::from_json(j.at("config"));
  h.num_nodes = j.at("num_nodes").get<int>();
  h.num_features = j.at("num_features").get<int>();
  h.num_classes = j.at("num_classes").get<int>();
  h.version = j.value("version", "");
  return h;
}

void save_checkpoint(const std::filesystem::path& file, const CheckpointHeader& header,
                     const std::vector<Parameter*>& params) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out.write(kMagic, sizeof(kMagic));
  const std::string hj = header.to_json().dump();
  write_pod<std::uint64_t>(out, hj.size());
  out.write(hj.data(), static_cast<std::streamsize>(hj.size()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * p->value.size()));
  }
  if (!out) throw std::runtime_error("write failed for " + file.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("checkpoint: bad magic in " + file.string());
  const auto hlen = read_pod<std::uint64_t>(in, "header length");
  std::string hj(hlen, '\0');
  if (!in.read(hj.data(), static_cast<std::streamsize>(hlen)))
    throw ValidationError("checkpoint: truncated header");
  LoadedCheckpoint ckpt;
  try {
    ckpt.header = CheckpointHeader::from_json(nlohmann::json::parse(hj));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad header JSON: ") + e.what());
  }
  const auto count = read_pod<std::uint32_t>(in, "parameter count");
  for (std::uint32_t p = 0; p < count; ++p) {
    const auto name_len = read_pod<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ValidationError("checkpoint: truncated name");
    const auto rows = read_pod<std::uint64_t>(in, "rows");
    const auto cols = read_pod<std::uint64_t>(in, "cols");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!in.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(double) * m.size())))
      throw ValidationError("checkpoint: truncated data for " + name);
    ckpt.params.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

ScrlModel model_from_checkpoint(const LoadedCheckpoint& ckpt) {
  const TrainConfig& cfg = ckpt.header.config;
  ModelDims dims;
  dims.in_dim = ckpt.header.num_features;
  dims.hidden = cfg.hidden;
  dims.embed = cfg.embed;
  dims.prototypes = cfg.resolve_prototypes(ckpt.header.num_classes);
  dims.classes = ckpt.header.num_classes;
  ScrlModel model(dims, cfg.ablation, cfg.dropout, cfg.tau, cfg.normalize_embeddings);
  std::vector<Parameter*> params = model.parameters();
  if (params.size() != ckpt.params.size())
    throw ValidationError("checkpoint: expected " + std::to_string(params.size()) +
                          " parameters, found " + std::to_string(ckpt.params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = ckpt.params[i];
    if (name != params[i]->name)
      throw ValidationError("checkpoint: parameter " + std::to_string(i) + " is \"" + name +
                            "\", expected \"" + params[i]->name + "\"");
    if (value.rows() != params[i]->value.rows() || value.cols() != params[i]->value.cols())
      throw ValidationError("checkpoint: shape mismatch for " + name);
    params[i]->value = value;
  }
  return model;
}

}  // namespace scrl
