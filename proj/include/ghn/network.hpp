#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ghn/layers.hpp"

namespace ghn {

enum class LayerKind { conv, pool, dense };
enum class Activation { none, threshold, relu_ghd, relu };
enum class NetKind { ghn, baseline };
enum class Head { softmax, logistic };

const char* to_string(Activation a);
const char* to_string(NetKind k);
const char* to_string(Head h);
Activation parse_activation(const std::string& s);
NetKind parse_net_kind(const std::string& s);
Head parse_head(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in = 0;   // conv: input channels; dense: input width (0 = infer)
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::size_t out = 0;  // conv: filters; dense: output width
  std::size_t stride = 1;
  Padding padding = Padding::same;
  std::size_t window = 2;       // pool only
  std::size_t pool_stride = 2;  // pool only
  Activation activation = Activation::threshold;
  ThresholdConfig threshold;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  NetKind kind = NetKind::ghn;
  bool batch_norm = false;
  Head head = Head::softmax;
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t channels = 1;
  std::vector<LayerSpec> layers;
  double init_std = 0.1;
  // GHN weights are stored as v and used as w = weight_gain * sqrt(L) * v,
  // L the fan-in. 0 uses the stored values directly.
  double weight_gain = 5.0;

  std::size_t weighted_layers() const;
  std::size_t classes() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Raised for malformed architecture tokens; `token()` is the offending text.
class ArchitectureError : public std::invalid_argument {
 public:
  ArchitectureError(const std::string& msg, std::string token)
      : std::invalid_argument(msg), token_(std::move(token)) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

/// Parses "cv[1,5,5,16]-pool-cv[16,5,5,64]-pool-fc[1024]-fc[1024,10]".
/// cv[c_in,kh,kw,c_out]; pool is 2x2 stride 2; fc[out] or fc[in,out].
std::vector<LayerSpec> parse_architecture(const std::string& arch);
std::string render_architecture(const std::vector<LayerSpec>& layers);

/// Checks that adjacent shapes compose and fills inferred dense widths.
/// Errors name the 1-based layer index.
void resolve_shapes(NetworkSpec& spec);

/// Shape of the output of layer `index` for a batch of n, after resolve.
Shape layer_output_shape(const NetworkSpec& spec, std::size_t index, std::size_t n);

/// Factor between stored and effective GHN weights for one layer (1 for
/// baseline networks or weight_gain = 0).
double ghn_weight_scale(const NetworkSpec& spec, const LayerSpec& layer);

/// One recorded output of a weighted layer, after its activation (the raw
/// output for the classifier layer).
template <class T>
struct LayerOutput {
  std::string layer;
  Var<T> value;
};

template <class T>
class Network {
 public:
  /// Builds parameters with weights drawn from N(0, init_std^2) using `seed`.
  Network(NetworkSpec spec, std::uint64_t seed);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Logits [n, classes]. For GHN networks these are -h of the last layer.
  Var<T> forward(Tape<T>& tape, const Tensor<T>& images, bool training,
                 std::vector<LayerOutput<T>>* trace = nullptr);

  Var<T> loss(Var<T> logits, std::span<const int> labels) const;

  /// Every parameter in a fixed order, including non-trainable state.
  std::vector<Parameter<T>*> parameters();
  Parameter<T>* find(const std::string& name);

  const NetworkSpec& spec() const { return spec_; }
  /// Names of weighted layers ("conv1", "conv2", "fc3", ...).
  std::vector<std::string> layer_names() const;

 private:
  struct Layer {
    std::string name;
    LayerSpec spec;
    std::unique_ptr<Parameter<T>> weight;
    std::unique_ptr<Parameter<T>> bias;
    std::unique_ptr<BatchNormState<T>> bn;
    std::unique_ptr<Parameter<T>> ratio;
  };

  NetworkSpec spec_;
  std::vector<Layer> layers_;
};

extern template class Network<float>;
extern template class Network<double>;

/// Arg-max along the class axis, first index on ties.
template <class T>
std::vector<int> predict(const Tensor<T>& logits);

}  // namespace ghn
