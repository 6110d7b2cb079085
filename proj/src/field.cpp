#include "snerf/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "snerf/errors.hpp"
#include "snerf/rng.hpp"
#include "snerf/serialize.hpp"

namespace snerf {
namespace {

template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
S softplus(S x) {
  return x > S(20) ? x : std::log1p(std::exp(x));
}

template <typename S>
S logistic(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

}  // namespace

template <typename S>
std::vector<S> positional_encode(std::span<const S> v, int freqs, bool include_raw_input) {
  if (freqs < 0) throw DomainError("positional_encode: negative frequency count");
  const std::size_t n = v.size();
  std::vector<S> out;
  out.reserve(n * ((include_raw_input ? 1 : 0) + 2 * std::size_t(freqs)));
  if (include_raw_input) out.insert(out.end(), v.begin(), v.end());
  for (int k = 0; k < freqs; ++k) {
    const S scale = S(std::ldexp(std::numbers::pi, k));
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::sin(scale * v[i]));
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::cos(scale * v[i]));
  }
  return out;
}

template std::vector<float> positional_encode(std::span<const float>, int, bool);
template std::vector<double> positional_encode(std::span<const double>, int, bool);

FieldConfig FieldConfig::desk_scale(int num_classes) {
  FieldConfig c;
  c.num_classes = num_classes;
  return c;
}

FieldConfig FieldConfig::paper_scale(int num_classes) {
  FieldConfig c;
  c.trunk_depth = 8;
  c.trunk_width = 256;
  c.head_width = 128;
  c.skip_layer = 5;
  c.num_classes = num_classes;
  return c;
}

void FieldConfig::validate() const {
  if (encoding.pos_freqs < 0 || encoding.dir_freqs < 0) throw ConfigError("field: encoding lengths must be >= 0");
  if (encoding.encoded_size(3, encoding.pos_freqs) == 0 || encoding.encoded_size(3, encoding.dir_freqs) == 0) {
    throw ConfigError("field: empty input encoding (enable raw input or use at least one frequency)");
  }
  if (!(encoding.position_scale > 0.0) || !std::isfinite(encoding.position_scale)) {
    throw ConfigError("field: position_scale must be a positive finite number");
  }
  if (trunk_depth < 1 || trunk_width < 1 || head_width < 1) throw ConfigError("field: layer sizes must be >= 1");
  if (skip_layer != -1 && (skip_layer < 1 || skip_layer >= trunk_depth)) {
    throw ConfigError("field: skip_layer must be -1 or in [1, trunk_depth)");
  }
  if (num_classes < 1) throw ConfigError("field: num_classes must be >= 1");
}

template <typename S>
Field<S>::Field(const FieldConfig& config) : config_(config) {
  config_.validate();
  build_layout();
}

template <typename S>
void Field<S>::build_layout() {
  layers_.clear();
  std::size_t offset = 0;
  const int pos = config_.encoding.encoded_size(3, config_.encoding.pos_freqs);
  const int dir = config_.encoding.encoded_size(3, config_.encoding.dir_freqs);
  const int w = config_.trunk_width;
  const int hw = config_.head_width;
  auto add = [&](NetworkId net, std::string name, int in, int out) {
    LayerShape l{std::move(name), net, in, out, offset, offset + std::size_t(in) * out};
    offset = l.bias_offset + out;
    layers_.push_back(std::move(l));
    return int(layers_.size() - 1);
  };
  for (NetworkId net : {NetworkId::Coarse, NetworkId::Fine}) {
    NetworkLayers& ids = nets_[int(net)];
    ids.trunk.clear();
    for (int i = 0; i < config_.trunk_depth; ++i) {
      const int in = i == 0 ? pos : (i == config_.skip_layer ? w + pos : w);
      ids.trunk.push_back(add(net, "trunk" + std::to_string(i), in, w));
    }
    ids.sigma = add(net, "sigma", w, 1);
    ids.sem_hidden = add(net, "semantic_hidden", w, hw);
    ids.sem_out = add(net, "semantic_out", hw, config_.num_classes);
    ids.feature = add(net, "feature", w, w);
    ids.rgb_hidden = add(net, "rgb_hidden", w + dir, hw);
    ids.rgb_out = add(net, "rgb_out", hw, 3);
  }
  params_.assign(offset, S(0));
}

template <typename S>
void Field<S>::initialize(std::uint64_t seed) {
  Rng root(seed);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const LayerShape& l = layers_[li];
    Rng rng = root.derive(li);
    const double bound = 1.0 / std::sqrt(double(l.in));
    for (std::size_t i = l.weight_offset; i < l.bias_offset + l.out; ++i) params_[i] = S(rng.uniform(-bound, bound));
  }
}

template <typename S>
std::pair<std::size_t, std::size_t> Field<S>::network_range(NetworkId which) const {
  const NetworkLayers& ids = nets_[int(which)];
  return {layers_[ids.trunk.front()].weight_offset,
          layers_[ids.rgb_out].bias_offset + std::size_t(layers_[ids.rgb_out].out)};
}

template <typename S>
const LayerShape& Field<S>::layer(NetworkId which, const std::string& name) const {
  for (const auto& l : layers_) {
    if (l.network == which && l.name == name) return l;
  }
  throw DomainError("field: no layer named " + name);
}

template <typename S>
void Field<S>::encode(const Matrix<S>& v, int freqs, Matrix<S>& out) const {
  const bool raw = config_.encoding.include_raw_input;
  const Eigen::Index n = v.cols();
  out.resize(config_.encoding.encoded_size(3, freqs), n);
  Eigen::Index row = 0;
  if (raw) {
    out.topRows(3) = v;
    row = 3;
  }
  for (int k = 0; k < freqs; ++k) {
    const S scale = S(std::ldexp(std::numbers::pi, k));
    const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> arg = v.array() * scale;
    out.middleRows(row, 3) = arg.sin().matrix();
    out.middleRows(row + 3, 3) = arg.cos().matrix();
    row += 6;
  }
}

template <typename S>
void Field<S>::forward_impl(NetworkId which, const Matrix<S>& positions, const Matrix<S>& directions,
                            FieldBatch<S>& out, NetworkTape<S>& tape, const RowVec<S>* density_noise) const {
  const NetworkLayers& ids = nets_[int(which)];
  const int w = config_.trunk_width;
  auto weights = [&](int li) {
    const LayerShape& l = layers_[li];
    return Eigen::Map<const Matrix<S>>(params_.data() + l.weight_offset, l.out, l.in);
  };
  auto bias = [&](int li) {
    const LayerShape& l = layers_[li];
    return Eigen::Map<const ColVec<S>>(params_.data() + l.bias_offset, l.out);
  };

  encode(positions * S(config_.encoding.position_scale), config_.encoding.pos_freqs, tape.enc_pos);
  encode(directions, config_.encoding.dir_freqs, tape.enc_dir);

  tape.trunk.resize(config_.trunk_depth);
  for (int i = 0; i < config_.trunk_depth; ++i) {
    const auto W = weights(ids.trunk[i]);
    Matrix<S>& h = tape.trunk[i];
    if (i == 0) {
      h.noalias() = W * tape.enc_pos;
    } else if (i == config_.skip_layer) {
      h.noalias() = W.leftCols(w) * tape.trunk[i - 1];
      h.noalias() += W.rightCols(W.cols() - w) * tape.enc_pos;
    } else {
      h.noalias() = W * tape.trunk[i - 1];
    }
    h.colwise() += bias(ids.trunk[i]);
    h = h.cwiseMax(S(0));
  }
  const Matrix<S>& h = tape.trunk.back();

  tape.sigma_pre.noalias() = weights(ids.sigma) * h;
  tape.sigma_pre.array() += bias(ids.sigma)(0);
  if (density_noise) {
    if (density_noise->cols() != h.cols()) throw DomainError("field: density noise has the wrong length");
    tape.sigma_pre += *density_noise;
  }
  out.sigma.resize(h.cols());
  if (config_.density_activation == DensityActivation::Softplus) {
    out.sigma = tape.sigma_pre.unaryExpr([](S x) { return softplus(x); });
  } else {
    out.sigma = tape.sigma_pre.cwiseMax(S(0));
  }

  tape.sem_hidden.noalias() = weights(ids.sem_hidden) * h;
  tape.sem_hidden.colwise() += bias(ids.sem_hidden);
  tape.sem_hidden = tape.sem_hidden.cwiseMax(S(0));
  out.logits.noalias() = weights(ids.sem_out) * tape.sem_hidden;
  out.logits.colwise() += bias(ids.sem_out);

  // Viewing direction enters only after the density and semantic branches.
  tape.feature.noalias() = weights(ids.feature) * h;
  tape.feature.colwise() += bias(ids.feature);
  const auto Wrh = weights(ids.rgb_hidden);
  tape.rgb_hidden.noalias() = Wrh.leftCols(w) * tape.feature;
  tape.rgb_hidden.noalias() += Wrh.rightCols(Wrh.cols() - w) * tape.enc_dir;
  tape.rgb_hidden.colwise() += bias(ids.rgb_hidden);
  tape.rgb_hidden = tape.rgb_hidden.cwiseMax(S(0));
  out.rgb.noalias() = weights(ids.rgb_out) * tape.rgb_hidden;
  out.rgb.colwise() += bias(ids.rgb_out);
  out.rgb = out.rgb.unaryExpr([](S x) { return logistic(x); });
  tape.rgb = out.rgb;
}

template <typename S>
void Field<S>::evaluate(NetworkId which, const Matrix<S>& positions, const Matrix<S>& directions,
                        FieldBatch<S>& out) const {
  NetworkTape<S> scratch;
  forward_impl(which, positions, directions, out, scratch);
}

template <typename S>
void Field<S>::forward(NetworkId which, const Matrix<S>& positions, const Matrix<S>& directions,
                       FieldBatch<S>& out, NetworkTape<S>& tape, const RowVec<S>* density_noise) const {
  forward_impl(which, positions, directions, out, tape, density_noise);
}

template <typename S>
void Field<S>::backward(NetworkId which, const NetworkTape<S>& tape, const RowVec<S>& d_sigma, const Matrix<S>& d_rgb,
                        const Matrix<S>& d_logits, std::span<S> grad) const {
  const NetworkLayers& ids = nets_[int(which)];
  const int w = config_.trunk_width;
  auto weights = [&](int li) {
    const LayerShape& l = layers_[li];
    return Eigen::Map<const Matrix<S>>(params_.data() + l.weight_offset, l.out, l.in);
  };
  auto gweights = [&](int li) {
    const LayerShape& l = layers_[li];
    return Eigen::Map<Matrix<S>>(grad.data() + l.weight_offset, l.out, l.in);
  };
  auto gbias = [&](int li) {
    const LayerShape& l = layers_[li];
    return Eigen::Map<ColVec<S>>(grad.data() + l.bias_offset, l.out);
  };
  const Matrix<S>& h = tape.trunk.back();

  // Colour branch.
  Matrix<S> dz = d_rgb.cwiseProduct(tape.rgb.cwiseProduct((S(1) - tape.rgb.array()).matrix()));
  gweights(ids.rgb_out).noalias() += dz * tape.rgb_hidden.transpose();
  gbias(ids.rgb_out) += dz.rowwise().sum();
  Matrix<S> dhidden = weights(ids.rgb_out).transpose() * dz;
  dhidden = dhidden.cwiseProduct((tape.rgb_hidden.array() > S(0)).template cast<S>().matrix());
  {
    auto gW = gweights(ids.rgb_hidden);
    gW.leftCols(w).noalias() += dhidden * tape.feature.transpose();
    gW.rightCols(gW.cols() - w).noalias() += dhidden * tape.enc_dir.transpose();
    gbias(ids.rgb_hidden) += dhidden.rowwise().sum();
  }
  const Matrix<S> dfeature = weights(ids.rgb_hidden).leftCols(w).transpose() * dhidden;
  gweights(ids.feature).noalias() += dfeature * h.transpose();
  gbias(ids.feature) += dfeature.rowwise().sum();
  Matrix<S> dh = weights(ids.feature).transpose() * dfeature;

  // Semantic branch.
  gweights(ids.sem_out).noalias() += d_logits * tape.sem_hidden.transpose();
  gbias(ids.sem_out) += d_logits.rowwise().sum();
  Matrix<S> dsem = weights(ids.sem_out).transpose() * d_logits;
  dsem = dsem.cwiseProduct((tape.sem_hidden.array() > S(0)).template cast<S>().matrix());
  gweights(ids.sem_hidden).noalias() += dsem * h.transpose();
  gbias(ids.sem_hidden) += dsem.rowwise().sum();
  dh.noalias() += weights(ids.sem_hidden).transpose() * dsem;

  // Density branch.
  RowVec<S> dsig_pre;
  if (config_.density_activation == DensityActivation::Softplus) {
    dsig_pre = d_sigma.cwiseProduct(tape.sigma_pre.unaryExpr([](S x) { return logistic(x); }));
  } else {
    dsig_pre = d_sigma.cwiseProduct((tape.sigma_pre.array() > S(0)).template cast<S>().matrix());
  }
  gweights(ids.sigma).noalias() += dsig_pre * h.transpose();
  gbias(ids.sigma)(0) += dsig_pre.sum();
  dh.noalias() += weights(ids.sigma).transpose() * dsig_pre;

  // Trunk, last layer first.
  for (int i = config_.trunk_depth - 1; i >= 0; --i) {
    const int li = ids.trunk[i];
    dz = dh.cwiseProduct((tape.trunk[i].array() > S(0)).template cast<S>().matrix());
    auto gW = gweights(li);
    if (i == 0) {
      gW.noalias() += dz * tape.enc_pos.transpose();
    } else if (i == config_.skip_layer) {
      gW.leftCols(w).noalias() += dz * tape.trunk[i - 1].transpose();
      gW.rightCols(gW.cols() - w).noalias() += dz * tape.enc_pos.transpose();
    } else {
      gW.noalias() += dz * tape.trunk[i - 1].transpose();
    }
    gbias(li) += dz.rowwise().sum();
    if (i > 0) dh.noalias() = weights(li).leftCols(w).transpose() * dz;
  }
}

template <typename S>
FieldSample<S> Field<S>::query(NetworkId which, const Eigen::Vector3d& x, const Eigen::Vector3d& d) const {
  if (!x.allFinite() || !d.allFinite()) throw DomainError("field query: non-finite input");
  Matrix<S> pos = x.template cast<S>();
  Matrix<S> dir = d.template cast<S>();
  FieldBatch<S> out;
  evaluate(which, pos, dir, out);
  FieldSample<S> sample;
  sample.sigma = out.sigma(0);
  sample.rgb = out.rgb.col(0);
  sample.logits = out.logits.col(0);
  return sample;
}

template <typename S>
template <typename T>
Field<T> Field<S>::cast() const {
  Field<T> other;
  other.config_ = config_;
  other.layers_ = layers_;
  other.nets_[0] = {nets_[0].trunk, nets_[0].sigma, nets_[0].sem_hidden, nets_[0].sem_out,
                    nets_[0].feature, nets_[0].rgb_hidden, nets_[0].rgb_out};
  other.nets_[1] = {nets_[1].trunk, nets_[1].sigma, nets_[1].sem_hidden, nets_[1].sem_out,
                    nets_[1].feature, nets_[1].rgb_hidden, nets_[1].rgb_out};
  other.params_.resize(params_.size());
  std::transform(params_.begin(), params_.end(), other.params_.begin(), [](S v) { return T(v); });
  return other;
}

template class Field<float>;
template class Field<double>;
template Field<double> Field<float>::cast<double>() const;
template Field<float> Field<double>::cast<float>() const;
template Field<float> Field<float>::cast<float>() const;
template Field<double> Field<double>::cast<double>() const;

namespace {
constexpr char kCheckpointMagic[8] = {'S', 'N', 'E', 'R', 'F', 'C', 'K', '1'};
}

void save_checkpoint(const std::filesystem::path& path, const Field<float>& field, std::int64_t step) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  nlohmann::json header;
  header["format"] = "snerf-checkpoint";
  header["version"] = 1;
  header["step"] = step;
  header["field"] = field.config();
  header["num_params"] = field.num_params();
  auto& layers = header["layers"] = nlohmann::json::array();
  for (const auto& l : field.layers()) {
    layers.push_back({{"name", l.name},
                      {"network", l.network == NetworkId::Coarse ? "coarse" : "fine"},
                      {"in", l.in},
                      {"out", l.out},
                      {"weight_offset", l.weight_offset},
                      {"bias_offset", l.bias_offset}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::uint64_t len = text.size();
  out.write(kCheckpointMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), std::streamsize(len));
  out.write(reinterpret_cast<const char*>(field.params().data()), std::streamsize(field.num_params() * sizeof(float)));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0 || len > (1u << 24)) {
    throw FormatError(path.string() + ": not a checkpoint file");
  }
  std::string text(len, '\0');
  in.read(text.data(), std::streamsize(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  Checkpoint ck;
  try {
    ck.field = Field<float>(header.at("field").get<FieldConfig>());
    ck.step = header.at("step").get<std::int64_t>();
    if (header.at("num_params").get<std::size_t>() != ck.field.num_params()) {
      throw FormatError(path.string() + ": parameter count does not match the layer table");
    }
    const auto& layers = header.at("layers");
    if (layers.size() != ck.field.layers().size()) throw FormatError(path.string() + ": layer table mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = ck.field.layers()[i];
      if (layers[i].at("name") != l.name || layers[i].at("in") != l.in || layers[i].at("out") != l.out ||
          layers[i].at("weight_offset") != l.weight_offset) {
        throw FormatError(path.string() + ": layer table mismatch at " + l.name);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": bad field config: " + e.what());
  }
  in.read(reinterpret_cast<char*>(ck.field.params().data()), std::streamsize(ck.field.num_params() * sizeof(float)));
  if (!in) throw FormatError(path.string() + ": truncated parameter blob");
  for (float v : ck.field.params()) {
    if (!std::isfinite(v)) throw ValidationError(path.string() + ": non-finite parameter");
  }
  return ck;
}

}  // namespace snerf
