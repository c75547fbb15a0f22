#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphwing::nn {

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { Softplus, Identity };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// ln(1 + e^s), with the s + ln(1 + e^-s) branch above 30.
double softplus(double s);

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  std::vector<Activation> activations;   // one per weight layer
  bool bias = true;

  std::size_t n_inputs() const { return layer_sizes.front(); }
  std::size_t n_outputs() const { return layer_sizes.back(); }
  std::size_t n_layers() const { return activations.size(); }
  std::size_t n_weights() const;

  /// Softplus on every hidden layer, identity output.
  static MlpSpec feedforward(std::vector<std::size_t> sizes, bool bias = true);
  /// 2 n_q inputs, two softplus layers of `width`, n_q outputs.
  static MlpSpec for_dynamics(std::size_t n_q, std::size_t width = 16);
};

void validate(const MlpSpec& spec);

struct Layer {
  Eigen::MatrixXd W;  // fan_out x fan_in
  Eigen::VectorXd b;  // fan_out (empty without biases)
};

struct LayerOffset {
  std::size_t weights = 0;  // start of W, row-major
  std::size_t bias = 0;     // start of b
  std::size_t end = 0;
};

/// Layer-major; within a layer W row by row, then b.
std::vector<LayerOffset> layout(const MlpSpec& spec);

Eigen::VectorXd flatten(const MlpSpec& spec, const std::vector<Layer>& layers);
std::vector<Layer> unflatten(const MlpSpec& spec, const Eigen::VectorXd& w);

/// Caller-owned activations buffer so the sigma-point loop does not allocate.
struct ForwardScratch {
  Eigen::VectorXd a, b;
};

void forward(const MlpSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& w,
             const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::VectorXd> out, ForwardScratch& scratch);
Eigen::VectorXd forward(const MlpSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& w,
                        const Eigen::Ref<const Eigen::VectorXd>& x);

/// Columns of X are samples.
Eigen::MatrixXd forward_batch(const MlpSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& X);

/// Per-feature affine map z = (x - center) / scale.
struct Standardizer {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  bool empty() const { return center.size() == 0; }
  /// Columns of X are samples. Scales are floored so a dead channel maps to
  /// a tiny physical range instead of a unit one.
  static Standardizer fit(const Eigen::MatrixXd& X, double floor = 1e-12);
  static Standardizer identity(std::size_t n);
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const;
};

/// Text checkpoint, version 1:
///   morphwing-weights 1
///   layers <sizes...>
///   activations <names...>
///   bias 0|1
///   input_center/input_scale/output_center/output_scale <n> <values...>   (optional)
///   step <k>
///   n_w <count>
///   <one value per line, %.17g>
struct Checkpoint {
  MlpSpec spec;
  Eigen::VectorXd weights;
  Standardizer input;
  Standardizer output;
  std::size_t step = 0;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);
std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

}  // namespace morphwing::nn
