#include "dextog/denoiser.hpp"
#include "dextog/nn.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace dextog;
using namespace dextog::nn;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// A smooth scalar readout: mean(W .* y) + 100, written through mean_abs with
// a positive offset so it stays differentiable.
Var readout(const Var& y, const Mat& w) {
  return mean_abs(add(mul(y, constant(w)), constant(Mat::Constant(y.rows(), y.cols(), 100.0))));
}

// Checks d loss / d params against central differences entry by entry.
void check_gradients(const std::vector<Var>& params, const std::function<Var()>& loss_fn, double tol = 1e-6) {
  for (auto p : params) p.zero_grad();
  backward(loss_fn());
  for (auto p : params) {
    const Mat analytic = p.grad().size() ? p.grad() : Mat::Zero(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.value().size(); ++i) {
      const double h = 1e-6;
      const double orig = p.value().data()[i];
      p.mutable_value().data()[i] = orig + h;
      const double up = loss_fn().value()(0, 0);
      p.mutable_value().data()[i] = orig - h;
      const double down = loss_fn().value()(0, 0);
      p.mutable_value().data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      CHECK(std::abs(a - numeric) <= tol * std::max({1.0, std::abs(a), std::abs(numeric)}));
    }
  }
}

}  // namespace

TEST_CASE("elementwise and linear ops have correct gradients") {
  Rng rng(1);
  auto a = parameter(random_mat(3, 4, rng));
  auto b = parameter(random_mat(4, 2, rng));
  auto c = parameter(random_mat(3, 4, rng));
  auto row = parameter(random_mat(1, 4, rng));
  const Mat w2 = random_mat(3, 2, rng);
  const Mat w4 = random_mat(3, 4, rng);
  check_gradients({a, b}, [&] { return readout(matmul(a, b), w2); });
  check_gradients({a, c}, [&] { return readout(mul(add(a, c), sub(a, c)), w4); });
  check_gradients({a, row}, [&] { return readout(silu(add_row(scale(a, 1.7), row)), w4); });
  check_gradients({a}, [&] { return readout(transpose(transpose(a)), w4); });
}

TEST_CASE("structural ops have correct gradients") {
  Rng rng(2);
  auto a = parameter(random_mat(5, 3, rng));
  auto b = parameter(random_mat(5, 2, rng));
  auto c = parameter(random_mat(2, 3, rng));
  const Mat w8 = random_mat(5, 8, rng);
  check_gradients({a, b}, [&] { return readout(concat_cols({a, b, a}), w8); });
  check_gradients({a, c}, [&] { return readout(concat_rows({a, c}), Mat::Ones(7, 3)); });
  const Mat w = random_mat(5, 2, rng);
  check_gradients({a}, [&] { return readout(slice_cols(a, 1, 2), w); });
  const Mat w3 = random_mat(3, 5, rng);
  check_gradients({a}, [&] { return readout(reshape(a, 3, 5), w3); });
  const Mat w53 = random_mat(5, 3, rng);
  check_gradients({a}, [&] { return readout(shift_rows(a, 1), w53); });
  check_gradients({a}, [&] { return readout(shift_rows(a, -2), w53); });
}

TEST_CASE("reshape and shift semantics") {
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const Mat r = reshape(constant(m), 3, 2).value();
  CHECK(r(0, 0) == 1);
  CHECK(r(0, 1) == 2);
  CHECK(r(1, 0) == 3);
  CHECK(r(2, 1) == 6);
  const Mat s = shift_rows(constant(m), 1).value();
  CHECK(s.row(0) == m.row(1));
  CHECK(s.row(1).isZero());
}

TEST_CASE("softmax and layer norm gradients") {
  Rng rng(4);
  auto x = parameter(random_mat(3, 5, rng));
  const Mat w = random_mat(3, 5, rng);
  check_gradients({x}, [&] { return readout(softmax_rows(x), w); });
  Mat allowed = Mat::Ones(3, 5);
  allowed(0, 1) = 0;
  allowed(2, 4) = 0;
  check_gradients({x}, [&] { return readout(softmax_rows(x, &allowed), w); });
  const Mat p = softmax_rows(x, &allowed).value();
  CHECK(p(0, 1) == 0.0);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));

  Mat none = Mat::Ones(3, 5);
  none.row(1).setZero();
  CHECK_THROWS_AS(softmax_rows(x, &none), Error);

  auto gamma = parameter(random_mat(1, 5, rng));
  auto beta = parameter(random_mat(1, 5, rng));
  check_gradients({x, gamma, beta}, [&] { return readout(layer_norm_rows(x, gamma, beta), w); });
}

TEST_CASE("mean_abs value and subgradient") {
  Mat m(1, 4);
  m << -1, 2, -3, 4;
  auto x = parameter(m);
  const auto l = mean_abs(x);
  CHECK(l.value()(0, 0) == 2.5);
  backward(l);
  CHECK(x.grad()(0, 0) == -0.25);
  CHECK(x.grad()(0, 1) == 0.25);
}

TEST_CASE("dropout masks and rescales") {
  Rng rng(5);
  auto x = constant(Mat::Ones(50, 40));
  const Mat y = dropout(x, 0.25, rng).value();
  int zeros = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y.data()[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(y.data()[i] == doctest::Approx(1.0 / 0.75));
    }
  }
  CHECK(zeros > 350);
  CHECK(zeros < 650);
  CHECK(dropout(x, 0.0, rng).value() == x.value());
}

TEST_CASE("shape errors") {
  CHECK_THROWS_AS(matmul(constant(Mat::Zero(2, 3)), constant(Mat::Zero(2, 3))), Error);
  CHECK_THROWS_AS(add(constant(Mat::Zero(2, 3)), constant(Mat::Zero(3, 2))), Error);
  CHECK_THROWS_AS(backward(constant(Mat::Zero(2, 2))), Error);
  CHECK_THROWS_AS(reshape(constant(Mat::Zero(2, 3)), 4, 2), Error);
}

TEST_CASE("adam reduces a regression loss") {
  Rng rng(6);
  const Mat X = random_mat(32, 4, rng);
  const Mat W = random_mat(4, 2, rng);
  const Mat Y = X * W;
  Linear lin(4, 2, rng);
  Adam opt({lin.weight, lin.bias}, Adam::Options{0.05});
  auto loss = [&] { return mean_abs(sub(lin(constant(X)), constant(Y))); };
  const double start = loss().value()(0, 0);
  for (int i = 0; i < 300; ++i) {
    opt.zero_grad();
    auto l = loss();
    backward(l);
    opt.step();
  }
  CHECK(loss().value()(0, 0) < 0.1 * start);
}

TEST_CASE("denoiser gradient check, MLP and UNet") {
  Rng rng(7);
  const auto sched = make_schedule(10, 1e-4, 1e-2);
  for (auto arch : {DenoiserArch::Mlp, DenoiserArch::UNet}) {
    DenoiserConfig cfg;
    cfg.arch = arch;
    cfg.data_dim = 6;
    cfg.cond_dim = 5;
    cfg.time_embed_dim = 8;
    cfg.mlp_hidden = 16;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.transformer_hidden = 8;
    cfg.ff_hidden = 12;
    cfg.unet_blocks = 2;
    cfg.context_tokens = 3;
    const auto net = make_denoiser(cfg, 11);
    const Mat g0 = random_mat(3, 6, rng);
    const Mat eps = random_mat(3, 6, rng);
    const Mat cond = random_mat(3, 5, rng);
    const std::vector<int> t{1, 5, 10};
    // Dropout off so the loss is a deterministic function of the weights.
    auto loss = [&] { return batch_loss(*net, g0, t, eps, cond, sched, false, nullptr); };
    check_gradients(net->parameter_vars(), loss, 1e-5);
  }
}

TEST_CASE("denoiser shapes and configuration errors") {
  DenoiserConfig cfg;
  const auto mlp = make_denoiser(cfg, 1);
  CHECK(mlp->predict(Vec::Zero(61), 5, Vec::Zero(1152)).size() == 61);
  CHECK_THROWS_AS(mlp->predict(Vec::Zero(60), 5, Vec::Zero(1152)), Error);

  DenoiserConfig odd = cfg;
  odd.time_embed_dim = 7;
  CHECK_THROWS_AS(make_denoiser(odd, 1), Error);
  DenoiserConfig heads = cfg;
  heads.arch = DenoiserArch::UNet;
  heads.transformer_hidden = 10;
  CHECK_THROWS_AS(make_denoiser(heads, 1), Error);

  // Same seed, same weights.
  const auto again = make_denoiser(cfg, 1);
  const Vec x = Vec::LinSpaced(61, -1, 1);
  CHECK(again->predict(x, 3, Vec::Ones(1152)) == mlp->predict(x, 3, Vec::Ones(1152)));
}
