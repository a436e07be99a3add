#pragma once

// Pair-biased transformer trunk shared by the VAE encoder/decoder and the
// flow denoiser, plus the parameter store, Adam, EMA, and the versioned
// checkpoint container.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plfm/tensor.hpp"

namespace plfm {

struct ParamStore {
  std::vector<std::pair<std::string, Var>> items;  // insertion-ordered

  // stddev > 0 draws N(0, stddev^2); stddev == 0 zero-fills (biases and the
  // adaptive-norm modulation layers); "ones" makes layer-norm gains.
  Var create(const std::string& name, std::vector<int> shape, double stddev, Rng& rng);
  Var create_ones(const std::string& name, std::vector<int> shape);
  Var find(const std::string& name) const;  // throws MissingParameter
  size_t element_count() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by parameter name so
// they serialize alongside the parameters.
struct Adam {
  AdamConfig cfg;
  int64_t t = 0;
  std::map<std::string, Tensor> m, v;

  explicit Adam(AdamConfig c = {}) : cfg(c) {}
  void step(ParamStore& params);
};

// Exponential moving average of parameter values; decay 0 disables. swap()
// exchanges shadow and live values (call once before eval, once after).
struct Ema {
  double decay = 0.0;
  std::map<std::string, Tensor> shadow;

  void update(const ParamStore& params);
  void swap(ParamStore& params);
  bool enabled() const { return decay > 0.0; }
};

struct NetConfig {
  int c_seq = 64;
  int c_pair = 32;
  int n_layers = 2;
  int n_heads = 4;
  bool time_conditioned = false;  // adaptive layer norm driven by (t_x, t_z)
  int time_embed_dim = 32;        // sinusoidal width per time variable
};

// Transformer over a residue-indexed sequence representation with attention
// logits biased by a static pair representation. When time_conditioned, each
// block is modulated DiT-style by zero-initialized shift/scale/gate vectors
// computed from the two interpolation times, so freshly initialized nets are
// exactly time-independent.
class Network {
 public:
  Network(const NetConfig& cfg, int in_seq_width, int in_pair_width, int out_width,
          uint64_t seed);

  // seq_feats [rows, in_seq_width], pair_feats [rows*rows, in_pair_width].
  // Times are ignored unless time_conditioned.
  // Overload for differentiable sequence inputs (pair features stay constant).
  Var forward(const Var& seq_feats, const Tensor& pair_feats, double t_x = 0.0,
              double t_z = 0.0) const;
  Var forward_features(const Var& seq_feats, const Tensor& pair_feats, double t_x = 0.0,
                       double t_z = 0.0) const;
  Var forward(const Tensor& seq_feats, const Tensor& pair_feats, double t_x = 0.0,
              double t_z = 0.0) const;
  // The trunk output before the head, [rows, c_seq].
  Var forward_features(const Tensor& seq_feats, const Tensor& pair_feats, double t_x = 0.0,
                       double t_z = 0.0) const;

  const NetConfig& config() const { return cfg_; }
  int in_seq_width() const { return in_seq_w_; }
  int in_pair_width() const { return in_pair_w_; }
  int out_width() const { return out_w_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  size_t parameter_count() const { return params_.element_count(); }

 private:
  NetConfig cfg_;
  int in_seq_w_, in_pair_w_, out_w_;
  ParamStore params_;
};

// Sinusoidal position-in-time embedding on [0, 1], width dims (half sines,
// half cosines, frequencies geometrically spaced 1..1000).
std::vector<double> time_embedding(double t, int dims);

// Self-describing container: a version tag, a free-form JSON metadata string,
// and named f64 tensors. Binary layout is fixed little-endian.
struct Checkpoint {
  std::string meta;  // JSON text; callers own the schema
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);  // throws MalformedCheckpoint

// Pack / restore helpers: parameters go in under "<prefix>param.<name>",
// Adam moments under "<prefix>adam.{m,v}.<name>".
void pack_params(Checkpoint& ckpt, const std::string& prefix, const ParamStore& params);
void unpack_params(const Checkpoint& ckpt, const std::string& prefix, ParamStore& params);
void pack_adam(Checkpoint& ckpt, const std::string& prefix, const Adam& opt);
void unpack_adam(const Checkpoint& ckpt, const std::string& prefix, Adam& opt);

}  // namespace plfm
