#include "dextog/nn.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace dextog::nn {

namespace {

using Backward = std::function<void(Node&)>;

Var make(Mat value, std::vector<Var> inputs, Backward backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void push(Node& self, std::size_t i, const Mat& g) {
  if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate(g);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::Shape, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                 std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                 std::to_string(b.cols()));
  }
}

}  // namespace

Var constant(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw Error(Errc::Shape, "backward needs a scalar loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error(Errc::Shape, "matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                                 std::to_string(b.rows()) + " differ");
  }
  return make(a.value() * b.value(), {a, b}, [](Node& self) {
    const Mat& A = self.inputs[0]->value;
    const Mat& B = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad * B.transpose());
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(A.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    push(self, 1, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a, b}, [](Node& self) {
    push(self, 0, self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad.cwiseProduct(self.inputs[1]->value));
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(self.grad.cwiseProduct(self.inputs[0]->value));
  });
}

Var scale(const Var& a, double s) {
  return make(a.value() * s, {a}, [s](Node& self) { push(self, 0, self.grad * s); });
}

Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw Error(Errc::Shape, "add_row: bias must be 1 x cols");
  Mat out = x.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), {x, row}, [](Node& self) {
    push(self, 0, self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(self.grad.colwise().sum());
  });
}

Var silu(const Var& x) {
  const Mat sig = (1.0 + (-x.value().array()).exp()).inverse().matrix();
  Mat out = x.value().cwiseProduct(sig);
  return make(std::move(out), {x}, [sig](Node& self) {
    const auto& xv = self.inputs[0]->value.array();
    const auto s = sig.array();
    push(self, 0, (self.grad.array() * (s + xv * s * (1.0 - s))).matrix());
  });
}

Var transpose(const Var& x) {
  return make(x.value().transpose(), {x}, [](Node& self) { push(self, 0, self.grad.transpose()); });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(Errc::Shape, "concat_cols of nothing");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error(Errc::Shape, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    widths.push_back(p.cols());
    at += p.cols();
  }
  return make(std::move(out), parts, [widths](Node& self) {
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate(self.grad.middleCols(offset, widths[i]));
      offset += widths[i];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(Errc::Shape, "concat_rows of nothing");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error(Errc::Shape, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<Eigen::Index> heights;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    heights.push_back(p.rows());
    at += p.rows();
  }
  return make(std::move(out), parts, [heights](Node& self) {
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < heights.size(); ++i) {
      if (self.inputs[i]->requires_grad) self.inputs[i]->accumulate(self.grad.middleRows(offset, heights[i]));
      offset += heights[i];
    }
  });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw Error(Errc::Shape, "slice_cols out of range");
  return make(x.value().middleCols(start, count), {x}, [start, count](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Mat g = Mat::Zero(self.inputs[0]->value.rows(), self.inputs[0]->value.cols());
    g.middleCols(start, count) = self.grad;
    self.inputs[0]->accumulate(g);
  });
}

namespace {

Mat reshape_row_major(const Mat& in, Eigen::Index rows, Eigen::Index cols) {
  Mat out(rows, cols);
  const Eigen::Index in_cols = in.cols();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Eigen::Index flat = r * cols + c;
      out(r, c) = in(flat / in_cols, flat % in_cols);
    }
  }
  return out;
}

}  // namespace

Var reshape(const Var& x, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != x.rows() * x.cols()) throw Error(Errc::Shape, "reshape changes the element count");
  return make(reshape_row_major(x.value(), rows, cols), {x}, [](Node& self) {
    const Mat& in = self.inputs[0]->value;
    push(self, 0, reshape_row_major(self.grad, in.rows(), in.cols()));
  });
}

Var shift_rows(const Var& x, Eigen::Index offset) {
  const Eigen::Index n = x.rows();
  Mat out = Mat::Zero(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = i + offset;
    if (src >= 0 && src < n) out.row(i) = x.value().row(src);
  }
  return make(std::move(out), {x}, [offset](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    const Eigen::Index n = self.grad.rows();
    Mat g = Mat::Zero(n, self.grad.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index src = i + offset;
      if (src >= 0 && src < n) g.row(src) += self.grad.row(i);
    }
    self.inputs[0]->accumulate(g);
  });
}

Var softmax_rows(const Var& x, const Mat* allowed) {
  const Mat& v = x.value();
  if (allowed && (allowed->rows() != v.rows() || allowed->cols() != v.cols())) {
    throw Error(Errc::Shape, "softmax mask shape mismatch");
  }
  Mat out = Mat::Zero(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (!allowed || (*allowed)(i, j) != 0.0) mx = std::max(mx, v(i, j));
    }
    if (!std::isfinite(mx)) throw Error(Errc::Attention, "softmax row has no admissible entries");
    double sum = 0.0;
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (!allowed || (*allowed)(i, j) != 0.0) {
        out(i, j) = std::exp(v(i, j) - mx);
        sum += out(i, j);
      }
    }
    out.row(i) /= sum;
  }
  return make(std::move(out), {x}, [](Node& self) {
    const Mat& y = self.value;
    const Vec dots = (self.grad.cwiseProduct(y)).rowwise().sum();
    Mat g = y.cwiseProduct(self.grad - dots.replicate(1, y.cols()));
    push(self, 0, g);
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 || beta.cols() != c) {
    throw Error(Errc::Shape, "layer_norm: gamma/beta must be 1 x cols");
  }
  Mat xhat(n, c);
  Vec inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.value().row(i).mean();
    const auto centered = (x.value().row(i).array() - mean).matrix();
    const double var = centered.squaredNorm() / static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std[i];
  }
  Mat out = xhat;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = xhat.row(i).cwiseProduct(gamma.value().row(0)) + beta.value().row(0);
  }
  return make(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& self) {
    const Mat& g = self.grad;
    const Mat& gam = self.inputs[1]->value;
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(g.cwiseProduct(xhat).colwise().sum());
    if (self.inputs[2]->requires_grad) self.inputs[2]->accumulate(g.colwise().sum());
    if (!self.inputs[0]->requires_grad) return;
    const double c = static_cast<double>(g.cols());
    Mat dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const Eigen::RowVectorXd dxhat = g.row(i).cwiseProduct(gam.row(0));
      const double m1 = dxhat.sum() / c;
      const double m2 = dxhat.dot(xhat.row(i)) / c;
      dx.row(i) = inv_std[i] * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
    }
    self.inputs[0]->accumulate(dx);
  });
}

Var mean_abs(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  Mat out(1, 1);
  out(0, 0) = x.value().cwiseAbs().sum() / n;
  return make(std::move(out), {x}, [n](Node& self) {
    const Mat sign = self.inputs[0]->value.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
    push(self, 0, sign * (self.grad(0, 0) / n));
  });
}

Var dropout(const Var& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw Error(Errc::Config, "dropout probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Mat mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(x, constant(std::move(mask)));
}

Linear::Linear(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  Mat b(1, out);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = dist(rng);
  weight = parameter(std::move(w));
  bias = parameter(std::move(b));
}

LayerNorm::LayerNorm(Eigen::Index dim) : gamma(parameter(Mat::Ones(1, dim))), beta(parameter(Mat::Zero(1, dim))) {}

void append(NamedParameters& out, const std::string& prefix, const Linear& layer) {
  out.emplace_back(prefix + ".weight", layer.weight);
  out.emplace_back(prefix + ".bias", layer.bias);
}

void append(NamedParameters& out, const std::string& prefix, const LayerNorm& layer) {
  out.emplace_back(prefix + ".gamma", layer.gamma);
  out.emplace_back(prefix + ".beta", layer.beta);
}

Adam::Adam(std::vector<Var> params, Options options) : params_(std::move(params)), options_(options) {
  if (!(options_.lr > 0.0)) throw Error(Errc::Config, "learning rate must be positive");
  for (const auto& p : params_) {
    m_.push_back(Mat::Zero(p.rows(), p.cols()));
    v_.push_back(Mat::Zero(p.rows(), p.cols()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Mat& g = params_[i].grad();
    if (g.size() == 0) continue;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    const Mat m_hat = m_[i] / bc1;
    const Mat v_hat = v_[i] / bc2;
    params_[i].mutable_value() -= (options_.lr * m_hat.array() / (v_hat.array().sqrt() + options_.eps)).matrix();
  }
}

}  // namespace dextog::nn
