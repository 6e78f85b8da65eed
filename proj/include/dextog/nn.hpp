#pragma once

// Minimal reverse-mode autodiff over dense row-batched matrices. Enough for
// the denoisers: linear maps, pointwise nonlinearities, layer norm,
// masked softmax, 1-D convolution by row shifts, and the L1 loss.

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dextog/common.hpp"

namespace dextog::nn {

struct Node {
  Mat value;
  Mat grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Mat& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Mat value);
Var parameter(Mat value);

/// Seeds d(loss)/d(loss) = 1 and propagates into every reachable parameter.
/// Parameter gradients accumulate until zero_grad().
void backward(const Var& loss);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// x (N x C) + row (1 x C) broadcast over rows.
Var add_row(const Var& x, const Var& row);
Var silu(const Var& x);
Var transpose(const Var& x);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
/// Row-major reinterpretation to rows x cols.
Var reshape(const Var& x, Eigen::Index rows, Eigen::Index cols);
/// out[i] = x[i + offset], zero outside the range.
Var shift_rows(const Var& x, Eigen::Index offset);
/// Row softmax; entries where `allowed` is 0 get probability 0.
Var softmax_rows(const Var& x, const Mat* allowed = nullptr);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Mean over all entries of |x|, as a 1 x 1 value.
Var mean_abs(const Var& x);
/// Inverted dropout with a fresh mask drawn from `rng`.
Var dropout(const Var& x, double p, Rng& rng);

/// Affine map x * W + b with W stored in x out layout.
struct Linear {
  Var weight;
  Var bias;

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, Rng& rng);

  Var operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }
  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }
};

struct LayerNorm {
  Var gamma;
  Var beta;

  LayerNorm() = default;
  explicit LayerNorm(Eigen::Index dim);

  Var operator()(const Var& x) const { return layer_norm_rows(x, gamma, beta); }
};

using NamedParameters = std::vector<std::pair<std::string, Var>>;

void append(NamedParameters& out, const std::string& prefix, const Linear& layer);
void append(NamedParameters& out, const std::string& prefix, const LayerNorm& layer);

class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Var> params, Options options);

  void zero_grad();
  void step();

 private:
  std::vector<Var> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  Options options_;
  long step_ = 0;
};

}  // namespace dextog::nn
