#include "morphwing/nn/mlp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace morphwing::nn {

const char* activation_name(Activation a) { return a == Activation::Softplus ? "softplus" : "identity"; }

Activation parse_activation(const std::string& name) {
  if (name == "softplus") return Activation::Softplus;
  if (name == "identity") return Activation::Identity;
  throw NnError("unknown activation '" + name + "'");
}

double softplus(double s) {
  if (s > 30.0) return s + std::log1p(std::exp(-s));
  return std::log1p(std::exp(s));
}

std::size_t MlpSpec::n_weights() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += (layer_sizes[l] + (bias ? 1 : 0)) * layer_sizes[l + 1];
  return n;
}

MlpSpec MlpSpec::feedforward(std::vector<std::size_t> sizes, bool bias) {
  MlpSpec s;
  s.layer_sizes = std::move(sizes);
  s.bias = bias;
  const std::size_t n = s.layer_sizes.size() < 2 ? 0 : s.layer_sizes.size() - 1;
  s.activations.assign(n, Activation::Softplus);
  if (n) s.activations.back() = Activation::Identity;
  return s;
}

MlpSpec MlpSpec::for_dynamics(std::size_t n_q, std::size_t width) {
  return feedforward({2 * n_q, width, width, n_q});
}

void validate(const MlpSpec& spec) {
  if (spec.layer_sizes.size() < 2) throw NnError("network needs at least an input and an output layer");
  if (spec.activations.size() != spec.layer_sizes.size() - 1)
    throw NnError("expected " + std::to_string(spec.layer_sizes.size() - 1) + " activations, got " +
                  std::to_string(spec.activations.size()));
  for (auto n : spec.layer_sizes)
    if (n == 0) throw NnError("layer of width 0");
  if (spec.activations.back() != Activation::Identity) throw NnError("output layer must be identity");
}

std::vector<LayerOffset> layout(const MlpSpec& spec) {
  std::vector<LayerOffset> out;
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    LayerOffset o;
    o.weights = pos;
    pos += spec.layer_sizes[l] * spec.layer_sizes[l + 1];
    o.bias = pos;
    if (spec.bias) pos += spec.layer_sizes[l + 1];
    o.end = pos;
    out.push_back(o);
  }
  return out;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::VectorXd flatten(const MlpSpec& spec, const std::vector<Layer>& layers) {
  validate(spec);
  if (layers.size() != spec.n_layers()) throw NnError("layer count does not match the spec");
  const auto offs = layout(spec);
  Eigen::VectorXd w(spec.n_weights());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(spec.layer_sizes[l]);
    if (layers[l].W.rows() != rows || layers[l].W.cols() != cols)
      throw NnError("layer " + std::to_string(l) + " weight matrix has the wrong shape");
    Eigen::Map<RowMajor>(w.data() + offs[l].weights, rows, cols) = layers[l].W;
    if (spec.bias) {
      if (layers[l].b.size() != rows) throw NnError("layer " + std::to_string(l) + " bias has the wrong size");
      w.segment(static_cast<Eigen::Index>(offs[l].bias), rows) = layers[l].b;
    }
  }
  return w;
}

std::vector<Layer> unflatten(const MlpSpec& spec, const Eigen::VectorXd& w) {
  validate(spec);
  if (static_cast<std::size_t>(w.size()) != spec.n_weights())
    throw NnError("weight vector has " + std::to_string(w.size()) + " entries, spec needs " +
                  std::to_string(spec.n_weights()));
  const auto offs = layout(spec);
  std::vector<Layer> layers(spec.n_layers());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(spec.layer_sizes[l]);
    layers[l].W = Eigen::Map<const RowMajor>(w.data() + offs[l].weights, rows, cols);
    if (spec.bias) layers[l].b = w.segment(static_cast<Eigen::Index>(offs[l].bias), rows);
  }
  return layers;
}

void forward(const MlpSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& w,
             const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out, ForwardScratch& scratch) {
  if (static_cast<std::size_t>(x.size()) != spec.n_inputs())
    throw NnError("input has " + std::to_string(x.size()) + " entries, network expects " +
                  std::to_string(spec.n_inputs()));
  if (static_cast<std::size_t>(w.size()) != spec.n_weights())
    throw NnError("weight vector has " + std::to_string(w.size()) + " entries, spec needs " +
                  std::to_string(spec.n_weights()));
  if (static_cast<std::size_t>(out.size()) != spec.n_outputs()) throw NnError("output buffer has the wrong size");

  Eigen::VectorXd& cur = scratch.a;
  Eigen::VectorXd& next = scratch.b;
  cur = x;
  std::size_t pos = 0;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const auto rows = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(spec.layer_sizes[l]);
    Eigen::Map<const RowMajor> W(w.data() + pos, rows, cols);
    pos += static_cast<std::size_t>(rows * cols);
    next.noalias() = W * cur;
    if (spec.bias) {
      next += w.segment(static_cast<Eigen::Index>(pos), rows);
      pos += static_cast<std::size_t>(rows);
    }
    if (spec.activations[l] == Activation::Softplus)
      for (Eigen::Index i = 0; i < rows; ++i) next[i] = softplus(next[i]);
    cur.swap(next);
  }
  out = cur;
}

Eigen::VectorXd forward(const MlpSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& w,
                        const Eigen::Ref<const Eigen::VectorXd>& x) {
  ForwardScratch scratch;
  Eigen::VectorXd out(static_cast<Eigen::Index>(spec.n_outputs()));
  forward(spec, w, x, out, scratch);
  return out;
}

Eigen::MatrixXd forward_batch(const MlpSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& X) {
  ForwardScratch scratch;
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(spec.n_outputs()), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) forward(spec, w, X.col(j), Y.col(j), scratch);
  return Y;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& X, double floor) {
  Standardizer s;
  const auto n = X.rows();
  s.center = X.rowwise().mean();
  s.scale = Eigen::VectorXd::Ones(n);
  if (X.cols() < 2) return s;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sd = std::sqrt((X.row(i).array() - s.center[i]).square().sum() / static_cast<double>(X.cols() - 1));
    s.scale[i] = std::max(sd, floor);
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  return {Eigen::VectorXd::Zero(m), Eigen::VectorXd::Ones(m)};
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (empty()) return x;
  return ((x - center).array() / scale.array()).matrix();
}

Eigen::VectorXd Standardizer::invert(const Eigen::VectorXd& z) const {
  if (empty()) return z;
  return (z.array() * scale.array()).matrix() + center;
}

namespace {

void put(std::string& out, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(len));
}

void put_vector(std::string& out, const char* key, const Eigen::VectorXd& v) {
  out += key;
  out += ' ';
  out += std::to_string(v.size());
  for (double x : v) {
    out += ' ';
    put(out, x);
  }
  out += '\n';
}

double number(const std::string& tok, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw NnError("checkpoint line " + std::to_string(line) + ": bad number '" + tok + "'");
  return v;
}

Eigen::VectorXd read_vector(std::istringstream& ls, std::size_t line) {
  long n = -1;
  if (!(ls >> n) || n < 0) throw NnError("checkpoint line " + std::to_string(line) + ": bad vector length");
  Eigen::VectorXd v(n);
  std::string tok;
  for (long i = 0; i < n; ++i) {
    if (!(ls >> tok)) throw NnError("checkpoint line " + std::to_string(line) + ": vector is short");
    v[i] = number(tok, line);
  }
  return v;
}

}  // namespace

std::string format_checkpoint(const Checkpoint& c) {
  validate(c.spec);
  if (static_cast<std::size_t>(c.weights.size()) != c.spec.n_weights())
    throw NnError("checkpoint weights do not match the spec");
  std::string out = "morphwing-weights 1\nlayers";
  for (auto n : c.spec.layer_sizes) out += ' ' + std::to_string(n);
  out += "\nactivations";
  for (auto a : c.spec.activations) out += std::string(" ") + activation_name(a);
  out += "\nbias " + std::string(c.spec.bias ? "1" : "0") + "\n";
  if (!c.input.empty()) {
    put_vector(out, "input_center", c.input.center);
    put_vector(out, "input_scale", c.input.scale);
  }
  if (!c.output.empty()) {
    put_vector(out, "output_center", c.output.center);
    put_vector(out, "output_scale", c.output.scale);
  }
  out += "step " + std::to_string(c.step) + "\n";
  out += "n_w " + std::to_string(c.weights.size()) + "\n";
  for (double v : c.weights) {
    put(out, v);
    out += '\n';
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  if (!next_line() || line != "morphwing-weights 1") throw NnError("not a version 1 weight checkpoint");

  Checkpoint c;
  c.spec.layer_sizes.clear();
  long n_w = -1;
  while (n_w < 0 && next_line()) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "layers") {
      std::size_t n;
      while (ls >> n) c.spec.layer_sizes.push_back(n);
    } else if (key == "activations") {
      std::string a;
      while (ls >> a) c.spec.activations.push_back(parse_activation(a));
    } else if (key == "bias") {
      int b = 1;
      ls >> b;
      c.spec.bias = b != 0;
    } else if (key == "input_center") {
      c.input.center = read_vector(ls, lineno);
    } else if (key == "input_scale") {
      c.input.scale = read_vector(ls, lineno);
    } else if (key == "output_center") {
      c.output.center = read_vector(ls, lineno);
    } else if (key == "output_scale") {
      c.output.scale = read_vector(ls, lineno);
    } else if (key == "step") {
      ls >> c.step;
    } else if (key == "n_w") {
      ls >> n_w;
    } else {
      throw NnError("checkpoint line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  validate(c.spec);
  if (n_w < 0 || static_cast<std::size_t>(n_w) != c.spec.n_weights())
    throw NnError("checkpoint n_w does not match its layer sizes");
  if (c.input.center.size() != c.input.scale.size() || c.output.center.size() != c.output.scale.size())
    throw NnError("checkpoint standardization vectors are inconsistent");
  c.weights.resize(n_w);
  for (long i = 0; i < n_w; ++i) {
    if (!next_line()) throw NnError("checkpoint ends after " + std::to_string(i) + " weights");
    c.weights[i] = number(line, lineno);
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NnError("cannot write " + path.string());
  out << format_checkpoint(ckpt);
  if (!out) throw NnError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NnError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace morphwing::nn
