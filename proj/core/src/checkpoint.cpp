#include "vstab/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vstab/errors.hpp"

namespace vstab {

namespace {

using json = nlohmann::json;

constexpr int kVersion = 1;

const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "softplus") return Activation::softplus;
  if (s == "identity") return Activation::identity;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ParseError("unknown activation '" + s + "'");
}

json layer_to_json(const MlpLayer& layer) {
  json j;
  j["out"] = layer.weights.rows();
  j["in"] = layer.weights.cols();
  j["activation"] = to_string(layer.activation);
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(layer.weights.size()));
  for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
  }
  j["weights"] = w;
  j["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
  return j;
}

MlpLayer layer_from_json(const json& j) {
  MlpLayer layer;
  const auto rows = j.at("out").get<Eigen::Index>();
  const auto cols = j.at("in").get<Eigen::Index>();
  layer.activation = activation_from_string(j.at("activation").get<std::string>());
  const auto w = j.at("weights").get<std::vector<double>>();
  const auto b = j.at("bias").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || w.size() != static_cast<std::size_t>(rows * cols) ||
      b.size() != static_cast<std::size_t>(rows)) {
    throw ParseError("layer dimensions do not match stored arrays");
  }
  layer.weights.resize(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = w[k++];
  }
  layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
  return layer;
}

std::vector<double> vec_to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json doc;
  doc["format"] = "vstab-model";
  doc["version"] = kVersion;
  doc["latent_dim"] = ckpt.model.latent_dim;
  doc["recon_likelihood"] =
      ckpt.model.recon_likelihood == ReconLikelihood::gaussian ? "gaussian" : "bernoulli";
  doc["norm_stats"] = {{"offset", vec_to_std(ckpt.model.norm_stats.offset)},
                       {"scale", vec_to_std(ckpt.model.norm_stats.scale)}};
  doc["encoder"] = json::array();
  for (const auto& l : ckpt.model.encoder_layers) doc["encoder"].push_back(layer_to_json(l));
  doc["mean_head"] = layer_to_json(ckpt.model.mean_head);
  doc["var_head"] = layer_to_json(ckpt.model.var_head);
  doc["decoder"] = json::array();
  for (const auto& l : ckpt.model.decoder_layers) doc["decoder"].push_back(layer_to_json(l));
  if (ckpt.alignment) {
    doc["alignment"] = {{"beta",
                         {{ckpt.alignment->beta(0, 0), ckpt.alignment->beta(0, 1)},
                          {ckpt.alignment->beta(1, 0), ckpt.alignment->beta(1, 1)}}}};
    if (ckpt.phi) doc["alignment"]["phi"] = *ckpt.phi;
  }
  return doc.dump(2) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "vstab-model") {
      throw ParseError("not a model checkpoint (missing format tag)");
    }
    if (doc.at("version").get<int>() != kVersion) {
      throw ValidationError("unsupported checkpoint version");
    }
    Checkpoint ckpt;
    ckpt.model.latent_dim = doc.at("latent_dim").get<int>();
    const auto likelihood = doc.at("recon_likelihood").get<std::string>();
    if (likelihood == "gaussian") {
      ckpt.model.recon_likelihood = ReconLikelihood::gaussian;
    } else if (likelihood == "bernoulli") {
      ckpt.model.recon_likelihood = ReconLikelihood::bernoulli;
    } else {
      throw ParseError("unknown recon_likelihood '" + likelihood + "'");
    }
    ckpt.model.norm_stats.offset =
        vec_from_std(doc.at("norm_stats").at("offset").get<std::vector<double>>());
    ckpt.model.norm_stats.scale =
        vec_from_std(doc.at("norm_stats").at("scale").get<std::vector<double>>());
    for (const auto& l : doc.at("encoder")) ckpt.model.encoder_layers.push_back(layer_from_json(l));
    ckpt.model.mean_head = layer_from_json(doc.at("mean_head"));
    ckpt.model.var_head = layer_from_json(doc.at("var_head"));
    for (const auto& l : doc.at("decoder")) ckpt.model.decoder_layers.push_back(layer_from_json(l));
    if (doc.contains("alignment")) {
      const auto& a = doc.at("alignment");
      AlignmentMap map;
      const auto beta = a.at("beta").get<std::vector<std::vector<double>>>();
      if (beta.size() != 2 || beta[0].size() != 2 || beta[1].size() != 2) {
        throw ParseError("alignment beta must be 2x2");
      }
      map.beta << beta[0][0], beta[0][1], beta[1][0], beta[1][1];
      ckpt.alignment = map;
      if (a.contains("phi")) ckpt.phi = a.at("phi").get<double>();
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << serialize_checkpoint(ckpt);
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace vstab
