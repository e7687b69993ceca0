#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ognn/common.hpp"
#include "ognn/model.hpp"
#include "ognn/rng.hpp"

namespace ognn {

// Checkpoint container: 8-byte magic, u64 header length, JSON header
// (model config, precision, parameter table, rng stream positions),
// then raw little-endian parameter payloads in header order.
// Round-trips are bitwise stable.
inline constexpr char kCheckpointMagic[8] = {'O', 'G', 'N', 'N', 'C', 'K', 'P', '1'};

namespace detail {

inline json model_config_to_json(const ModelConfig& cfg) {
  return {{"layers", cfg.layers},
          {"hidden", cfg.hidden},
          {"chunk-factor", cfg.chunk_factor},
          {"mlp-layers", cfg.mlp_layers},
          {"tie-gates", cfg.tie_gates},
          {"layernorm-every", cfg.layernorm_every},
          {"layernorm-eps", cfg.layernorm_eps},
          {"dropout-theta", cfg.dropout_theta},
          {"dropout-xi", cfg.dropout_xi},
          {"variant", to_string(cfg.variant)},
          {"num-classes", cfg.num_classes},
          {"in-features", cfg.in_features},
          {"sparse-input", cfg.sparse_input}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.layers = j.at("layers").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.chunk_factor = j.at("chunk-factor").get<int>();
  cfg.mlp_layers = j.at("mlp-layers").get<int>();
  cfg.tie_gates = j.at("tie-gates").get<bool>();
  cfg.layernorm_every = j.at("layernorm-every").get<int>();
  cfg.layernorm_eps = j.at("layernorm-eps").get<double>();
  cfg.dropout_theta = j.at("dropout-theta").get<double>();
  cfg.dropout_xi = j.at("dropout-xi").get<double>();
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  cfg.num_classes = j.at("num-classes").get<int>();
  cfg.in_features = j.at("in-features").get<int>();
  cfg.sparse_input = j.at("sparse-input").get<bool>();
  return cfg;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const RngPool* rng = nullptr) {
  json header;
  header["config"] = detail::model_config_to_json(model.config);
  header["precision"] = std::is_same_v<T, float> ? "f32" : "f64";
  json params = json::array();
  visit_params(const_cast<ModelParams<T>&>(model.params),
               [&params](const std::string& name, ParamGroup group, const Mat<T>& m) {
                 params.push_back({{"name", name},
                                   {"group", group == ParamGroup::theta ? "theta" : "xi"},
                                   {"rows", m.rows()},
                                   {"cols", m.cols()}});
               });
  header["params"] = std::move(params);
  if (rng) {
    std::ostringstream os;
    rng->save(os);
    header["rng"] = os.str();
  }
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("checkpoint: cannot write " + path.string());
  out.write(kCheckpointMagic, 8);
  const std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  visit_params(const_cast<ModelParams<T>&>(model.params),
               [&out](const std::string&, ParamGroup, const Mat<T>& m) {
                 out.write(reinterpret_cast<const char*>(m.data()),
                           static_cast<std::streamsize>(static_cast<std::size_t>(m.size()) *
                                                        sizeof(T)));
               });
  if (!out) throw IngestError("checkpoint: short write to " + path.string());
}

inline json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw IngestError("checkpoint: " + path.string() + ": bad magic");
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IngestError("checkpoint: " + path.string() + ": truncated header");
  try {
    return json::parse(htext);
  } catch (const json::exception& e) {
    throw IngestError("checkpoint: " + path.string() + ": bad header: " + e.what());
  }
}

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path, RngPool* rng = nullptr) {
  const json header = read_checkpoint_header(path);
  const std::string precision = header.at("precision").get<std::string>();
  const std::string want = std::is_same_v<T, float> ? "f32" : "f64";
  if (precision != want) {
    throw IngestError("checkpoint: " + path.string() + " holds " + precision + ", expected " +
                      want);
  }
  Model<T> model;
  model.config = detail::model_config_from_json(header.at("config"));
  model.params = ModelParams<T>::init(model.config, 0);

  std::ifstream in(path, std::ios::binary);
  std::uint64_t hlen = 0;
  in.seekg(8);
  in.read(reinterpret_cast<char*>(&hlen), 8);
  in.seekg(static_cast<std::streamoff>(16 + hlen));

  std::size_t idx = 0;
  const json& params = header.at("params");
  visit_params(model.params, [&](const std::string& name, ParamGroup, Mat<T>& m) {
    if (idx >= params.size()) {
      throw IngestError("checkpoint: " + path.string() + ": missing parameter '" + name + "'");
    }
    const json& meta = params.at(idx);
    if (meta.at("name").get<std::string>() != name ||
        meta.at("rows").get<Index>() != m.rows() || meta.at("cols").get<Index>() != m.cols()) {
      throw IngestError("checkpoint: " + path.string() + ": parameter table mismatch at '" +
                        name + "' (config/checkpoint shape disagreement)");
    }
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(static_cast<std::size_t>(m.size()) * sizeof(T)));
    ++idx;
  });
  if (!in || idx != params.size()) {
    throw IngestError("checkpoint: " + path.string() + ": truncated payload");
  }
  if (rng && header.contains("rng")) {
    std::istringstream is(header.at("rng").get<std::string>());
    *rng = RngPool::load(is);
  }
  return model;
}

}  // namespace ognn
