#pragma once

// Per-residue conditional VAE over all-atom structures. The encoder reads
// full-atom features and emits an 8-dim diagonal Gaussian per residue; the
// decoder reads CA coordinates plus a latent row per residue and emits
// sequence logits and coordinates for the 36 non-CA atom slots. CA positions
// pass through untouched unless the fully-latent variant is enabled, in
// which case the decoder predicts CA too and its input CA track is zeroed.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plfm/featurize.hpp"
#include "plfm/net.hpp"
#include "plfm/protein.hpp"

namespace plfm {

struct VaeConfig {
  NetConfig encoder;
  NetConfig decoder;
  double beta = 1e-4;        // KL weight
  bool fully_latent = false; // decoder predicts CA as well (ablation variant)
  uint64_t seed = 0;
};

// Per-residue posterior moments and one reparameterized draw, each [L, 8].
struct LatentState {
  Tensor mu;
  Tensor log_sigma;
  Tensor z;
};

struct VaeLossParts {
  double total = 0;
  double ce = 0;        // sequence cross-entropy, summed over residues
  double coord_mse = 0; // masked squared error, already halved
  double kl = 0;        // unweighted KL sum; enters total scaled by beta
};

// Decoder output bundled with the assembled structure. Atoms outside the
// canonical set of the predicted residue type are left zero and masked out.
struct VaeDecoded {
  std::vector<ResidueType> seq;
  Tensor logits; // [L, 20]
  ProteinStructure structure;
};

class Vae {
 public:
  explicit Vae(const VaeConfig& cfg);

  const VaeConfig& config() const { return cfg_; }
  Network& encoder() { return enc_; }
  Network& decoder() { return dec_; }
  const Network& encoder() const { return enc_; }
  const Network& decoder() const { return dec_; }

  // Joint parameter view (names prefixed "enc." / "dec.") sharing storage
  // with the two networks; hand this to Adam.
  ParamStore& trainable() { return joint_; }
  const ParamStore& trainable() const { return joint_; }

  // Centers the structure internally. rng == nullptr takes the posterior
  // mean instead of sampling.
  LatentState encode(const ProteinStructure& p, Rng* rng) const;

  // x_ca in the centered frame; z [L, 8].
  VaeDecoded decode(const std::vector<Vec3>& x_ca, const Tensor& z) const;

  // encode + decode; the result lives in the centered frame of the input.
  ProteinStructure reconstruct(const ProteinStructure& p, Rng* rng) const;

  // Differentiable training loss: CE + 1/2 coordinate SSE (masked by the
  // atoms actually present) + beta * KL, reparameterized draw through rng.
  Var loss(const ProteinStructure& p, Rng& rng, VaeLossParts* parts = nullptr) const;

 private:
  VaeConfig cfg_;
  Network enc_;
  Network dec_;
  ParamStore joint_;
};

// Adds magnitude * (unit Gaussian direction) to one latent row.
Tensor perturb_latent(const Tensor& z, int residue, double magnitude, Rng& rng);

// Optimizer + bookkeeping that rides along in checkpoints so interrupted
// runs resume bit-for-bit (the data RNG state is serialized too).
struct TrainState {
  Adam adam;
  Rng rng{0};
  int64_t step = 0;
};

struct VaeTrainConfig {
  int64_t steps = 2000; // target total step count (resume-aware)
  int batch_size = 4;
  double lr = 1e-3;
  double ema_decay = 0.0; // 0 disables EMA
  int log_every = 20;
};

struct TrainCurveRow {
  int64_t step = 0;
  double total = 0, ce = 0, coord_mse = 0, kl = 0;
};

// Runs Adam until state.step reaches cfg.steps; returns the logged curve
// rows for the steps executed in this call. ema may be null.
std::vector<TrainCurveRow> train_vae(Vae& vae, const std::vector<ProteinStructure>& data,
                                     const VaeTrainConfig& cfg, TrainState& state,
                                     Ema* ema = nullptr);

void save_vae(const std::string& path, const Vae& vae, const TrainState* state = nullptr);
// state != nullptr also restores optimizer/RNG/step when present in the file.
Vae load_vae(const std::string& path, TrainState* state = nullptr);

}  // namespace plfm
