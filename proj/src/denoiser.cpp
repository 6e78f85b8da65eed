#include "dextog/denoiser.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace dextog {

void DenoiserConfig::validate() const {
  if (data_dim < 1 || cond_dim < 0) throw Error(Errc::Config, "denoiser data/cond widths must be positive");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw Error(Errc::Config, "time_embed_dim must be even");
  if (arch == DenoiserArch::Mlp) {
    if (mlp_layers < 1 || mlp_hidden < 1) throw Error(Errc::Config, "bad MLP shape");
  } else {
    if (unet_blocks < 1 || channels < 1 || heads < 1 || ff_hidden < 1 || context_tokens < 1) {
      throw Error(Errc::Config, "bad UNet shape");
    }
    if (transformer_hidden % heads != 0) throw Error(Errc::Config, "transformer_hidden must divide by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw Error(Errc::Config, "dropout must be in [0, 1)");
  }
}

Mat Denoiser::time_embeddings(const std::vector<int>& t) const {
  Mat out(static_cast<Eigen::Index>(t.size()), config_.time_embed_dim);
  for (std::size_t i = 0; i < t.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = time_embedding(t[i], config_.time_embed_dim).transpose();
  }
  return out;
}

Vec Denoiser::predict(const Vec& g_t, int t, const Vec& cond) const {
  if (g_t.size() != config_.data_dim || cond.size() != config_.cond_dim) {
    throw Error(Errc::Shape, "denoiser input widths do not match its config");
  }
  const auto out = forward(nn::constant(g_t.transpose()), {t}, nn::constant(cond.transpose()), false, nullptr);
  return out.value().row(0).transpose();
}

NoisePredictor Denoiser::predictor() const {
  return [this](const Vec& g, int t, const Vec& c) { return predict(g, t, c); };
}

std::vector<nn::Var> Denoiser::parameter_vars() const {
  std::vector<nn::Var> out;
  for (const auto& [name, var] : parameters()) out.push_back(var);
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// MLP: [g_t | time embedding | cond] -> hidden -> ... -> eps

class MlpDenoiser final : public Denoiser {
 public:
  MlpDenoiser(const DenoiserConfig& cfg, Rng& rng) : Denoiser(cfg) {
    Eigen::Index in = cfg.data_dim + cfg.time_embed_dim + cfg.cond_dim;
    for (int l = 0; l < cfg.mlp_layers; ++l) {
      const Eigen::Index out = l + 1 == cfg.mlp_layers ? cfg.data_dim : cfg.mlp_hidden;
      layers_.emplace_back(in, out, rng);
      in = out;
    }
  }

  nn::Var forward(const nn::Var& g_t, const std::vector<int>& t, const nn::Var& cond, bool, Rng*) const override {
    nn::Var h = nn::concat_cols({g_t, nn::constant(time_embeddings(t)), cond});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = layers_[l](h);
      if (l + 1 < layers_.size()) h = nn::silu(h);
    }
    return h;
  }

  nn::NamedParameters parameters() const override {
    nn::NamedParameters out;
    for (std::size_t l = 0; l < layers_.size(); ++l) nn::append(out, "mlp." + std::to_string(l), layers_[l]);
    return out;
  }

 private:
  std::vector<nn::Linear> layers_;
};

// ---------------------------------------------------------------------------
// UNet-style network over the parameter axis: each of the data_dim entries is
// a position carrying `channels` features. Stages are ResBlock + spatial
// transformer (self-attention, cross-attention to condition tokens, FFN).

// Same-padded kernel-3 convolution along rows: [x(i-1) | x(i) | x(i+1)] * W.
nn::Var conv3(const nn::Linear& lin, const nn::Var& x) {
  return lin(nn::concat_cols({nn::shift_rows(x, -1), x, nn::shift_rows(x, 1)}));
}

struct MultiHeadAttention {
  nn::Linear q, k, v, out;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(Eigen::Index query_dim, Eigen::Index context_dim, int inner, int n_heads, Rng& rng)
      : q(query_dim, inner, rng), k(context_dim, inner, rng), v(context_dim, inner, rng), out(inner, query_dim, rng),
        heads(n_heads) {}

  nn::Var operator()(const nn::Var& x, const nn::Var& context) const {
    const nn::Var Q = q(x);
    const nn::Var K = k(context);
    const nn::Var V = v(context);
    const Eigen::Index head_dim = Q.cols() / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<nn::Var> per_head;
    for (int h = 0; h < heads; ++h) {
      const auto qh = nn::slice_cols(Q, h * head_dim, head_dim);
      const auto kh = nn::slice_cols(K, h * head_dim, head_dim);
      const auto vh = nn::slice_cols(V, h * head_dim, head_dim);
      const auto weights = nn::softmax_rows(nn::scale(nn::matmul(qh, nn::transpose(kh)), scale));
      per_head.push_back(nn::matmul(weights, vh));
    }
    return out(nn::concat_cols(per_head));
  }

  void collect(nn::NamedParameters& p, const std::string& prefix) const {
    nn::append(p, prefix + ".q", q);
    nn::append(p, prefix + ".k", k);
    nn::append(p, prefix + ".v", v);
    nn::append(p, prefix + ".out", out);
  }
};

struct UNetStage {
  // ResBlock
  nn::LayerNorm res_norm1, res_norm2;
  nn::Linear res_conv1, res_conv2, res_time;
  // Spatial transformer
  nn::LayerNorm attn_norm, cross_norm, ff_norm;
  MultiHeadAttention self_attn, cross_attn;
  nn::Linear ff1, ff2;
};

class UNetDenoiser final : public Denoiser {
 public:
  UNetDenoiser(const DenoiserConfig& cfg, Rng& rng) : Denoiser(cfg) {
    const Eigen::Index C = cfg.channels;
    time1_ = nn::Linear(cfg.time_embed_dim, C, rng);
    time2_ = nn::Linear(C, C, rng);
    context_ = nn::Linear(std::max(cfg.cond_dim, 1), C * cfg.context_tokens, rng);
    conv_in_ = nn::Linear(3, C, rng);
    for (int b = 0; b < cfg.unet_blocks; ++b) {
      UNetStage s;
      s.res_norm1 = nn::LayerNorm(C);
      s.res_conv1 = nn::Linear(3 * C, C, rng);
      s.res_time = nn::Linear(C, C, rng);
      s.res_norm2 = nn::LayerNorm(C);
      s.res_conv2 = nn::Linear(3 * C, C, rng);
      s.attn_norm = nn::LayerNorm(C);
      s.self_attn = MultiHeadAttention(C, C, cfg.transformer_hidden, cfg.heads, rng);
      s.cross_norm = nn::LayerNorm(C);
      s.cross_attn = MultiHeadAttention(C, C, cfg.transformer_hidden, cfg.heads, rng);
      s.ff_norm = nn::LayerNorm(C);
      s.ff1 = nn::Linear(C, cfg.ff_hidden, rng);
      s.ff2 = nn::Linear(cfg.ff_hidden, C, rng);
      stages_.push_back(std::move(s));
    }
    out_norm_ = nn::LayerNorm(C);
    conv_out_ = nn::Linear(3 * C, 1, rng);
  }

  nn::Var forward(const nn::Var& g_t, const std::vector<int>& t, const nn::Var& cond, bool training,
                  Rng* rng) const override {
    const auto& cfg = config();
    const double p = training && rng ? cfg.dropout : 0.0;
    const nn::Var temb_all = time2_(nn::silu(time1_(nn::constant(time_embeddings(t)))));
    const nn::Var ctx_all = cfg.cond_dim > 0 ? context_(cond) : context_(nn::constant(Mat::Zero(g_t.rows(), 1)));

    std::vector<nn::Var> outputs;
    outputs.reserve(static_cast<std::size_t>(g_t.rows()));
    for (Eigen::Index b = 0; b < g_t.rows(); ++b) {
      const nn::Var x = select_row_as_column(g_t, b);
      const nn::Var temb = select_row(temb_all, b);
      const nn::Var ctx = nn::reshape(select_row(ctx_all, b), cfg.context_tokens, cfg.channels);

      nn::Var h = conv3(conv_in_, x);
      for (const auto& s : stages_) {
        nn::Var r = conv3(s.res_conv1, nn::silu(s.res_norm1(h)));
        r = nn::add_row(r, s.res_time(nn::silu(temb)));
        r = nn::silu(s.res_norm2(r));
        if (p > 0.0) r = nn::dropout(r, p, *rng);
        h = nn::add(h, conv3(s.res_conv2, r));

        const nn::Var a = s.attn_norm(h);
        h = nn::add(h, s.self_attn(a, a));
        h = nn::add(h, s.cross_attn(s.cross_norm(h), ctx));
        nn::Var f = nn::silu(s.ff1(s.ff_norm(h)));
        if (p > 0.0) f = nn::dropout(f, p, *rng);
        h = nn::add(h, s.ff2(f));
      }
      outputs.push_back(nn::transpose(conv3(conv_out_, nn::silu(out_norm_(h)))));
    }
    return nn::concat_rows(outputs);
  }

  nn::NamedParameters parameters() const override {
    nn::NamedParameters p;
    nn::append(p, "unet.time1", time1_);
    nn::append(p, "unet.time2", time2_);
    nn::append(p, "unet.context", context_);
    nn::append(p, "unet.conv_in", conv_in_);
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const auto& s = stages_[i];
      const std::string pre = "unet.stage" + std::to_string(i);
      nn::append(p, pre + ".res_norm1", s.res_norm1);
      nn::append(p, pre + ".res_conv1", s.res_conv1);
      nn::append(p, pre + ".res_time", s.res_time);
      nn::append(p, pre + ".res_norm2", s.res_norm2);
      nn::append(p, pre + ".res_conv2", s.res_conv2);
      nn::append(p, pre + ".attn_norm", s.attn_norm);
      s.self_attn.collect(p, pre + ".self_attn");
      nn::append(p, pre + ".cross_norm", s.cross_norm);
      s.cross_attn.collect(p, pre + ".cross_attn");
      nn::append(p, pre + ".ff_norm", s.ff_norm);
      nn::append(p, pre + ".ff1", s.ff1);
      nn::append(p, pre + ".ff2", s.ff2);
    }
    nn::append(p, "unet.out_norm", out_norm_);
    nn::append(p, "unet.conv_out", conv_out_);
    return p;
  }

 private:
  static nn::Var select_row(const nn::Var& x, Eigen::Index row) {
    return nn::transpose(nn::slice_cols(nn::transpose(x), row, 1));
  }
  static nn::Var select_row_as_column(const nn::Var& x, Eigen::Index row) {
    return nn::slice_cols(nn::transpose(x), row, 1);
  }

  nn::Linear time1_, time2_, context_, conv_in_, conv_out_;
  nn::LayerNorm out_norm_;
  std::vector<UNetStage> stages_;
};

}  // namespace

std::unique_ptr<Denoiser> make_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  if (config.arch == DenoiserArch::Mlp) return std::make_unique<MlpDenoiser>(config, rng);
  return std::make_unique<UNetDenoiser>(config, rng);
}

nn::Var batch_loss(const Denoiser& denoiser, const Mat& g0, const std::vector<int>& t, const Mat& eps,
                   const Mat& cond, const NoiseSchedule& sched, bool training, Rng* rng) {
  if (g0.rows() != eps.rows() || g0.cols() != eps.cols() || g0.rows() != cond.rows() ||
      static_cast<std::size_t>(g0.rows()) != t.size()) {
    throw Error(Errc::Shape, "batch_loss: inconsistent batch shapes");
  }
  const auto& cfg = denoiser.config();
  if (g0.cols() != cfg.data_dim || cond.cols() != cfg.cond_dim) {
    throw Error(Errc::Shape, "batch_loss: widths do not match the denoiser");
  }
  Mat g_t(g0.rows(), g0.cols());
  for (Eigen::Index i = 0; i < g0.rows(); ++i) {
    sched.check_step(t[static_cast<std::size_t>(i)]);
    const double abar = sched.alpha_bar(t[static_cast<std::size_t>(i)]);
    g_t.row(i) = std::sqrt(abar) * g0.row(i) + std::sqrt(1.0 - abar) * eps.row(i);
  }
  const auto pred = denoiser.forward(nn::constant(std::move(g_t)), t, nn::constant(cond), training, rng);
  return nn::mean_abs(nn::sub(nn::constant(eps), pred));
}

TrainReport train(Denoiser& denoiser, const std::vector<TrainingSample>& dataset, const NoiseSchedule& sched,
                  const TrainConfig& cfg) {
  if (dataset.empty()) throw Error(Errc::Precondition, "training dataset is empty");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw Error(Errc::Config, "bad batch size or epoch count");
  const auto& dcfg = denoiser.config();
  for (const auto& s : dataset) {
    if (s.grasp.size() != dcfg.data_dim || s.conditions.empty()) {
      throw Error(Errc::Shape, "training sample does not match the denoiser widths");
    }
    for (const auto& c : s.conditions) {
      if (c.size() != dcfg.cond_dim) throw Error(Errc::Shape, "condition width does not match the denoiser");
    }
  }

  nn::Adam adam(denoiser.parameter_vars(), nn::Adam::Options{cfg.learning_rate});
  Rng rng(cfg.seed);
  std::uniform_int_distribution<int> step_dist(1, sched.T);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> variant(dataset.size(), 0);

  TrainReport report;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto n = dataset[i].conditions.size();
      variant[i] = n == 1 ? 0 : std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const auto B = static_cast<Eigen::Index>(end - begin);
      Mat g0(B, dcfg.data_dim);
      Mat cond(B, dcfg.cond_dim);
      Mat eps(B, dcfg.data_dim);
      std::vector<int> t(static_cast<std::size_t>(B));
      for (Eigen::Index r = 0; r < B; ++r) {
        const std::size_t idx = order[begin + static_cast<std::size_t>(r)];
        g0.row(r) = dataset[idx].grasp.transpose();
        cond.row(r) = dataset[idx].conditions[variant[idx]].transpose();
        t[static_cast<std::size_t>(r)] = step_dist(rng);
        eps.row(r) = standard_normal(rng, dcfg.data_dim).transpose();
      }
      adam.zero_grad();
      const auto loss = batch_loss(denoiser, g0, t, eps, cond, sched, true, &rng);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        throw Error(Errc::NumericalDivergence, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                   ", step " + std::to_string(report.steps));
      }
      nn::backward(loss);
      adam.step();
      loss_sum += value;
      ++batches;
      ++report.steps;
    }
    report.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
    if (cfg.on_epoch) cfg.on_epoch(epoch, report.epoch_losses.back());
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && cfg.on_checkpoint) {
      cfg.on_checkpoint(epoch + 1);
    }
    if (cfg.max_seconds > 0.0 && elapsed() > cfg.max_seconds) {
      spdlog::info("training stopped at epoch {} after {:.1f}s (time budget)", epoch + 1, elapsed());
      break;
    }
  }
  report.seconds = elapsed();
  return report;
}

}  // namespace dextog
