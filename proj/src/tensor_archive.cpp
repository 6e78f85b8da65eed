#include "dextog/tensor_archive.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dextog {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "dextog-tensors-v1";

void put_encoder(TensorArchive& a, const std::string& prefix, const EncoderWeights& w) {
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const std::string p = prefix + ".sa" + std::to_string(l);
    a.tensors[p + ".w1"] = w.layers[l].w1;
    a.tensors[p + ".b1"] = w.layers[l].b1;
    a.tensors[p + ".w2"] = w.layers[l].w2;
    a.tensors[p + ".b2"] = w.layers[l].b2;
  }
}

EncoderWeights get_encoder(const TensorArchive& a, const std::string& prefix, int layers) {
  EncoderWeights w;
  for (int l = 0; l < layers; ++l) {
    const std::string p = prefix + ".sa" + std::to_string(l);
    w.layers.push_back({a.at(p + ".w1"), a.at(p + ".b1"), a.at(p + ".w2"), a.at(p + ".b2")});
  }
  return w;
}

}  // namespace

const Mat& TensorArchive::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(Errc::Io, "tensor '" + name + "' missing from archive");
  return it->second;
}

std::string TensorArchive::to_json() const {
  json t = json::object();
  for (const auto& [name, m] : tensors) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    t[name] = {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
  }
  return json{{"format", kFormat}, {"meta", meta}, {"tensors", std::move(t)}}.dump();
}

TensorArchive TensorArchive::from_json(const std::string& text) {
  TensorArchive a;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormat) throw Error(Errc::Io, "unknown tensor archive format");
    a.meta = j.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& [name, entry] : j.at("tensors").items()) {
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      const auto data = entry.at("data").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
          static_cast<std::size_t>(shape[0] * shape[1]) != data.size()) {
        throw Error(Errc::Io, "tensor '" + name + "' has inconsistent shape and data");
      }
      Mat m(shape[0], shape[1]);
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[k++];
      }
      a.tensors.emplace(name, std::move(m));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::Io, std::string("malformed tensor archive: ") + e.what());
  }
  return a;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp);
    out << to_json();
    if (!out) throw Error(Errc::Io, "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

Model Model::create(const Config& config) {
  config.validate();
  Model m;
  m.config = config;
  const auto seed = config.pipeline.model_seed;
  m.conditioning = ConditioningModel::random(config.pointnet, config.language_aggregation.T_d,
                                             config.language_aggregation.dimension_in_cross_attention,
                                             derive_seed(seed, "conditioning"));
  m.denoiser = make_denoiser(config.denoiser(), derive_seed(seed, "denoiser"));
  m.schedule = config.schedule();
  return m;
}

TensorArchive Model::to_archive() const {
  TensorArchive a;
  a.meta["config"] = config.to_json();
  a.meta["model_hash"] = config.model_hash();
  put_encoder(a, "object_encoder", conditioning.object_encoder);
  put_encoder(a, "part_encoder", conditioning.part_encoder);
  const auto& at = conditioning.attention;
  a.tensors["attention.wq"] = at.wq;
  a.tensors["attention.bq"] = at.bq;
  a.tensors["attention.wk"] = at.wk;
  a.tensors["attention.bk"] = at.bk;
  a.tensors["attention.wv"] = at.wv;
  a.tensors["attention.bv"] = at.bv;
  for (const auto& [name, var] : denoiser->parameters()) a.tensors["denoiser." + name] = var.value();
  Mat betas(1, schedule.T);
  for (int t = 1; t <= schedule.T; ++t) betas(0, t - 1) = schedule.beta(t);
  a.tensors["schedule.betas"] = betas;
  return a;
}

Model Model::from_archive(const TensorArchive& archive) {
  auto it = archive.meta.find("config");
  if (it == archive.meta.end()) throw Error(Errc::Io, "archive has no config");
  Model m;
  m.config = Config::from_json(it->second);
  auto hash = archive.meta.find("model_hash");
  if (hash == archive.meta.end() || hash->second != m.config.model_hash()) {
    throw Error(Errc::Io, "archive model hash does not match its config");
  }
  const auto& cfg = m.config;
  m.conditioning.sa = cfg.pointnet;
  m.conditioning.object_encoder = get_encoder(archive, "object_encoder", cfg.pointnet.num_layers);
  m.conditioning.part_encoder = get_encoder(archive, "part_encoder", cfg.pointnet.num_layers);
  m.conditioning.object_encoder.check(cfg.pointnet);
  m.conditioning.part_encoder.check(cfg.pointnet);
  auto& at = m.conditioning.attention;
  at.wq = archive.at("attention.wq");
  at.bq = archive.at("attention.bq");
  at.wk = archive.at("attention.wk");
  at.bk = archive.at("attention.bk");
  at.wv = archive.at("attention.wv");
  at.bv = archive.at("attention.bv");
  if (at.token_dim() != cfg.language_aggregation.T_d ||
      at.attn_dim() != cfg.language_aggregation.dimension_in_cross_attention) {
    throw Error(Errc::Shape, "attention weights do not match the config");
  }
  m.denoiser = make_denoiser(cfg.denoiser(), 0);
  for (auto& [name, var] : m.denoiser->parameters()) {
    const Mat& v = archive.at("denoiser." + name);
    if (v.rows() != var.rows() || v.cols() != var.cols()) {
      throw Error(Errc::Shape, "denoiser tensor '" + name + "' has the wrong shape");
    }
    var.mutable_value() = v;
  }
  m.schedule = cfg.schedule();
  const Mat& betas = archive.at("schedule.betas");
  if (betas.size() != m.schedule.T) throw Error(Errc::Shape, "stored schedule length differs from config");
  for (int t = 1; t <= m.schedule.T; ++t) {
    if (betas(0, t - 1) != m.schedule.beta(t)) throw Error(Errc::Io, "stored schedule differs from config");
  }
  return m;
}

}  // namespace dextog
