#pragma once

// Conditional flow matching over the partially latent state: explicit CA
// coordinates plus one 8-dim latent row per residue, with independent
// interpolation times for the two modalities. The denoiser is a single
// time-conditioned trunk whose head emits both velocity fields.

#include <cstdint>
#include <string>
#include <vector>

#include "plfm/net.hpp"
#include "plfm/vae.hpp"

namespace plfm {

// Mixture time law: with probability uniform_weight draw U(0,1), otherwise
// Beta(a, b). Coordinates lean late (a=1.9, b=1.0), latents early, so
// coordinates tend to settle before the latents commit.
struct TimeSamplerConfig {
  double uniform_weight = 0.02;
  double coord_a = 1.9, coord_b = 1.0;
  double latent_a = 1.0, latent_b = 1.5;
};

struct TimePair {
  double t_x = 0, t_z = 0;
};

TimePair sample_times(Rng& rng, const TimeSamplerConfig& cfg = {});

// Velocity estimate at one state: v_x [L][3], v_z [L, 8].
struct Velocity {
  std::vector<Vec3> v_x;
  Tensor v_z;
};

class FlowModel {
 public:
  // cfg.time_conditioned is forced on; the head width is 3 + latent_dim.
  explicit FlowModel(const NetConfig& cfg, uint64_t seed);

  Velocity velocity(const std::vector<Vec3>& x_t, const Tensor& z_t, double t_x,
                    double t_z) const;

  const NetConfig& config() const { return cfg_; }
  Network& net() { return net_; }
  const Network& net() const { return net_; }
  uint64_t seed() const { return seed_; }

 private:
  NetConfig cfg_;
  uint64_t seed_;
  Network net_;
};

struct CfmLossParts {
  double total = 0;
  double coord = 0;  // squared error of the CA velocity field
  double latent = 0; // squared error of the latent velocity field
};

// One training term: draw (t_x, t_z), endpoints, and a fresh posterior
// latent (the VAE stays frozen; its draw passes through rng so curves are
// reproducible), interpolate, and regress both velocities on (x1-x0, z1-z0).
Var cfm_loss(const FlowModel& model, const Vae& vae, const ProteinStructure& p, Rng& rng,
             const TimeSamplerConfig& times = {}, CfmLossParts* parts = nullptr);

struct FlowTrainConfig {
  int64_t steps = 2000; // target total step count (resume-aware)
  int batch_size = 4;
  double lr = 1e-3;
  double ema_decay = 0.0;
  int log_every = 20;
  TimeSamplerConfig times;
};

std::vector<TrainCurveRow> train_flow(FlowModel& model, const Vae& vae,
                                      const std::vector<ProteinStructure>& data,
                                      const FlowTrainConfig& cfg, TrainState& state,
                                      Ema* ema = nullptr);

void save_flow(const std::string& path, const FlowModel& model,
               const TrainState* state = nullptr);
FlowModel load_flow(const std::string& path, TrainState* state = nullptr);

}  // namespace plfm
