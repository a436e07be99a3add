#pragma once

// Stochastic generation: velocity-to-score conversion, Langevin scaling,
// discretization schedules, the two-clock Euler-Maruyama step, and the
// end-to-end generate loop that decodes the final state into a structure.

#include <functional>
#include <string>
#include <vector>

#include "plfm/flow.hpp"
#include "plfm/vae.hpp"

namespace plfm {

enum class Schedule { uniform, exponential, quadratic };
enum class LangevinScale { inv_t, tan };

Schedule schedule_from_string(const std::string& s);      // UnknownSchedule
LangevinScale langevin_from_string(const std::string& s); // UnknownScaling
std::string to_string(Schedule s);
std::string to_string(LangevinScale s);

// t at step n of N on the modality's clock; endpoints land exactly on 0 and 1.
double schedule_value(Schedule kind, int n, int n_steps); // IndexOutOfRange

// beta(t): inv_t is 1/t (TimeAtZero for t <= 1e-9); tan is
// (pi/2)*tan((pi/2)(1-t)), defined on [0,1).
double langevin_scale(LangevinScale kind, double t);

// zeta = (t*v - x_t)/(1 - t); TimeAtOne when 1-t < 1e-9.
double score_from_velocity(double v, double x_t, double t);

struct ScorePair {
  std::vector<Vec3> s_x; // [L][3]
  Tensor s_z;            // [L, 8]
};

struct SamplerState {
  std::vector<Vec3> x; // CA coordinates
  Tensor z;            // [L, 8]
};

ScorePair score_from_velocity(const Velocity& v, const SamplerState& state, double t_x,
                              double t_z);

struct SamplerConfig {
  int n_steps = 400;
  Schedule schedule_x = Schedule::exponential;
  Schedule schedule_z = Schedule::quadratic;
  LangevinScale langevin_x = LangevinScale::inv_t;
  LangevinScale langevin_z = LangevinScale::tan;
  double eta_x = 0.1; // noise scale in [0,1]
  double eta_z = 0.1;
  // Ablation switches: false drops the beta*zeta drift (and with it the
  // noise term, which shares beta), leaving plain Euler integration.
  bool use_langevin_x = true;
  bool use_langevin_z = true;
  uint64_t seed = 0;
};

// Velocity oracle signature; FlowModel provides one, tests may substitute
// closed-form fields.
using VelocityFn =
    std::function<Velocity(const std::vector<Vec3>&, const Tensor&, double, double)>;

VelocityFn model_velocity(const FlowModel& model);

// One Euler-Maruyama step at index n (pre: 0 <= n < N). Both endpoints of
// the scaling functions are singular, so the Langevin drift and its noise
// run only for 0 < n < N-1. Noise epsilons are drawn x first, then z.
void em_step(SamplerState& state, const VelocityFn& velocity, const SamplerConfig& cfg,
             int n, Rng& rng);

// Runs all N steps from the given initial state.
void integrate(SamplerState& state, const VelocityFn& velocity, const SamplerConfig& cfg,
               Rng& rng);

// Full pipeline: Gaussian init, N em_steps, CA centering, decode.
ProteinStructure generate(const FlowModel& model, const Vae& vae, int length,
                          const SamplerConfig& cfg, Rng& rng); // LengthOutOfRange

// Largest length generate() accepts; attention is quadratic in it.
constexpr int max_generate_length = 256;

}  // namespace plfm
