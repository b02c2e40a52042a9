#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "repq/scaler.hpp"
#include "repq/segmentation.hpp"
#include "repq/tensor.hpp"

// Siamese encoder for repetition signals: each branch cuts a segment into
// overlapping windows, embeds every window with a small convolution stack,
// runs the window sequence through a stacked LSTM, lets multi-head
// self-attention mix the hidden sequence, and row-flattens the attended
// matrix into one pooled vector. Similarity between two segments is the
// cosine of their pooled vectors (both branches share one parameter set);
// a two-layer MLP head on the same pooled vector classifies range of motion.

namespace repq {

struct ConvLayerSpec {
  std::size_t channels = 0;  // output channels
  std::size_t kernel = 5;    // tap count, odd (same-padding)
};

struct ModelConfig {
  std::size_t window = 50;    // samples per window
  std::size_t step = 15;      // hop between window starts
  std::size_t max_len = 500;  // segments are front-padded to this length
  std::size_t d_model = 256;
  std::size_t heads = 16;
  std::size_t lstm_layers = 2;
  double dropout = 0.2;
  std::vector<ConvLayerSpec> conv{{32, 5}, {64, 5}};
  std::size_t mlp_hidden = 256;
  std::size_t num_classes = 5;
  // Ablation switches: disabling the spatial encoder replaces the conv stack
  // with a plain linear projection of the raw window; disabling the temporal
  // encoder or the attention block short-circuits that stage (shapes are
  // unchanged either way).
  bool use_spatial = true;
  bool use_temporal = true;
  bool use_attention = true;

  std::size_t n_windows() const { return (max_len - window) / step + 1; }
  std::size_t head_dim() const { return d_model / heads; }
  // Flattened per-window dimension entering the linear projection.
  std::size_t conv_flat_dim() const;
  void check() const;
};

// A segment cut into n overlapping windows after zero-padding at the front.
// `x` is [n*window, 6] with rows ordered (window, sample); `pad_mask[w]` is
// true when window w holds only padding (diagnostic only — padded windows
// flow through the model like any other).
struct WindowTensor {
  Tensor x;
  std::vector<bool> pad_mask;
  std::size_t n = 0;
};

// Errors when the signal is longer than cfg.max_len.
WindowTensor slide(const SignalMatrix& signal, const ModelConfig& cfg);

struct ModelParams {
  // name -> tensor; name order fixes every iteration (init, updates,
  // checkpoints), which is what makes training bit-reproducible.
  std::map<std::string, Tensor> t;
  std::size_t count() const;
  bool all_finite() const;
};

// Seed-deterministic scaled-normal initialisation (Box-Muller over the raw
// Mersenne stream, so the draw sequence is identical on every platform).
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct EncoderOutput {
  Tensor attended;  // [n_windows, d_model]
  Tensor pooled;    // [1, n_windows * d_model], row-flattened `attended`
};

// One recorded forward pass over a batch of standardised signals; the tape
// stays alive so a loss built on top of it can backpropagate into `params`.
struct ForwardPass {
  std::unique_ptr<Tape> tape;
  std::map<std::string, Tape::Id> params;
  Tape::Id features = -1;          // [batch*n, d_model]
  Tape::Id pooled = -1;            // [batch, n*d_model]
  Tape::Id logits = -1;            // [batch, num_classes]; -1 unless built
  std::vector<Tape::Id> attention;  // softmax nodes, one per head, [batch*n, n]
  std::size_t batch = 0;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  AxisScaler& scaler() { return scaler_; }
  const AxisScaler& scaler() const { return scaler_; }

  // Records the encoder (and optionally the classifier head) for signals
  // that are already standardised. `rng` drives dropout; pass nullptr for
  // eval mode (dropout off, fully deterministic).
  ForwardPass forward(const std::vector<const SignalMatrix*>& signals,
                      bool with_classifier, std::mt19937_64* rng) const;

  // Eval-mode helpers over raw signals; the stored scaler is applied first.
  EncoderOutput encode(const SignalMatrix& signal) const;
  double similarity(const SignalMatrix& a, const SignalMatrix& b) const;
  std::vector<double> classify(const SignalMatrix& signal) const;

 private:
  ModelConfig cfg_;
  ModelParams params_;
  AxisScaler scaler_;
};

// Checkpoint layout: [u32 header length][JSON header][float32 payload,
// little-endian]. The header records version, config, scaler, and per-tensor
// shapes/offsets; save(load(f)) reproduces f byte for byte.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace repq
