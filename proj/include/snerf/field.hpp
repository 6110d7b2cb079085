#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace snerf {

enum class NetworkId : int { Coarse = 0, Fine = 1 };
enum class DensityActivation { Softplus, Relu };

struct EncodingConfig {
  int pos_freqs = 10;
  int dir_freqs = 4;
  bool include_raw_input = true;
  /// Positions are multiplied by this before encoding, so that the scene's
  /// extent maps to roughly [-1, 1] and the lowest frequency spans it.
  double position_scale = 1.0;

  int encoded_size(int dims, int freqs) const { return dims * ((include_raw_input ? 1 : 0) + 2 * freqs); }
  bool operator==(const EncodingConfig&) const = default;
};

/// Sin/cos features of `v` at frequencies 2^k * pi, k = 0..freqs-1. Layout:
/// [v (optional)] then for each k: sin of every component, cos of every component.
template <typename S>
std::vector<S> positional_encode(std::span<const S> v, int freqs, bool include_raw_input);

/// Topology of one network. Two independent networks (coarse and fine) share it.
///
///   enc(x) -> trunk[0..depth) (ReLU, width W; layer `skip_layer` re-reads enc(x))
///          -> density head (1, softplus or ReLU)
///          -> semantic head: W -> head_width (ReLU) -> num_classes logits
///          -> feature (W, linear) ++ enc(d) -> head_width (ReLU) -> 3 (sigmoid)
struct FieldConfig {
  EncodingConfig encoding;
  int trunk_depth = 4;
  int trunk_width = 64;
  int head_width = 32;
  int skip_layer = 2;  ///< -1 disables the skip connection
  int num_classes = 7;
  DensityActivation density_activation = DensityActivation::Softplus;

  static FieldConfig desk_scale(int num_classes);
  static FieldConfig paper_scale(int num_classes);
  void validate() const;
  bool operator==(const FieldConfig&) const = default;
};

struct LayerShape {
  std::string name;
  NetworkId network;
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  ///< out x in, column-major
  std::size_t bias_offset = 0;
};

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

/// Flat parameter or gradient storage. The fixed base alignment keeps the
/// vectorised kernels' summation order, and so the results, independent of
/// where the allocator happens to place the buffer.
template <typename S>
using ParamVector = std::vector<S, Eigen::aligned_allocator<S>>;

/// Batched field outputs, one column per sample.
template <typename S>
struct FieldBatch {
  Eigen::Matrix<S, 1, Eigen::Dynamic> sigma;
  Matrix<S> rgb;     ///< 3 x N
  Matrix<S> logits;  ///< C x N
};

template <typename S>
struct FieldSample {
  S sigma{};
  Eigen::Matrix<S, 3, 1> rgb;
  Eigen::Matrix<S, Eigen::Dynamic, 1> logits;
};

/// Anything that can be queried like the scene function: the MLP field or an
/// analytic stand-in used by tests and oracles.
template <typename S>
class FieldEvaluator {
 public:
  virtual ~FieldEvaluator() = default;
  virtual int num_classes() const = 0;
  virtual void evaluate(NetworkId which, const Matrix<S>& positions, const Matrix<S>& directions,
                        FieldBatch<S>& out) const = 0;
};

/// Intermediate activations of one batched forward pass, kept for backprop.
template <typename S>
struct NetworkTape {
  Matrix<S> enc_pos;
  Matrix<S> enc_dir;
  std::vector<Matrix<S>> trunk;  ///< post-ReLU output of every trunk layer
  Eigen::Matrix<S, 1, Eigen::Dynamic> sigma_pre;
  Matrix<S> sem_hidden;
  Matrix<S> feature;
  Matrix<S> rgb_hidden;
  Matrix<S> rgb;
};

/// Coarse + fine MLPs over one flat parameter vector.
template <typename S>
class Field final : public FieldEvaluator<S> {
 public:
  Field() = default;
  explicit Field(const FieldConfig& config);

  /// PyTorch-style uniform(+-1/sqrt(fan_in)) initialisation.
  void initialize(std::uint64_t seed);

  const FieldConfig& config() const { return config_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  ParamVector<S>& params() { return params_; }
  const ParamVector<S>& params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  /// Index range [begin, end) of the parameters of one network.
  std::pair<std::size_t, std::size_t> network_range(NetworkId which) const;
  const LayerShape& layer(NetworkId which, const std::string& name) const;

  int num_classes() const override { return config_.num_classes; }

  /// Single-point query. Throws DomainError on non-finite input.
  FieldSample<S> query(NetworkId which, const Eigen::Vector3d& x, const Eigen::Vector3d& d) const;

  void evaluate(NetworkId which, const Matrix<S>& positions, const Matrix<S>& directions,
                FieldBatch<S>& out) const override;

  /// Forward pass that records activations in `tape`. `density_noise`, when
  /// given, is added to the raw density of each sample before the activation.
  void forward(NetworkId which, const Matrix<S>& positions, const Matrix<S>& directions, FieldBatch<S>& out,
               NetworkTape<S>& tape, const Eigen::Matrix<S, 1, Eigen::Dynamic>* density_noise = nullptr) const;

  /// Accumulates dL/dparams into `grad` (sized num_params()) given output
  /// cotangents. Column counts match the recorded forward pass.
  void backward(NetworkId which, const NetworkTape<S>& tape, const Eigen::Matrix<S, 1, Eigen::Dynamic>& d_sigma,
                const Matrix<S>& d_rgb, const Matrix<S>& d_logits, std::span<S> grad) const;

  template <typename T>
  Field<T> cast() const;

 private:
  template <typename T>
  friend class Field;

  struct NetworkLayers {
    std::vector<int> trunk;
    int sigma = -1, sem_hidden = -1, sem_out = -1, feature = -1, rgb_hidden = -1, rgb_out = -1;
  };

  void build_layout();
  void encode(const Matrix<S>& v, int freqs, Matrix<S>& out) const;
  void forward_impl(NetworkId which, const Matrix<S>& positions, const Matrix<S>& directions, FieldBatch<S>& out,
                    NetworkTape<S>& tape, const Eigen::Matrix<S, 1, Eigen::Dynamic>* density_noise = nullptr) const;

  FieldConfig config_;
  std::vector<LayerShape> layers_;
  NetworkLayers nets_[2];
  ParamVector<S> params_;
};

extern template class Field<float>;
extern template class Field<double>;

/// Checkpoint: 8-byte magic "SNERFCK1", uint64 LE header length, JSON header
/// (field config, layer table, training step), then float32 LE parameters.
struct Checkpoint {
  Field<float> field;
  std::int64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Field<float>& field, std::int64_t step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace snerf
