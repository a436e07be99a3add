#include "plfm/sampler.hpp"

#include <cmath>

namespace plfm {

namespace {
constexpr double pi = 3.14159265358979323846;
}

Schedule schedule_from_string(const std::string& s) {
  if (s == "uniform") return Schedule::uniform;
  if (s == "exponential") return Schedule::exponential;
  if (s == "quadratic") return Schedule::quadratic;
  throw Error("UnknownSchedule", "'" + s + "'");
}

LangevinScale langevin_from_string(const std::string& s) {
  if (s == "inv_t") return LangevinScale::inv_t;
  if (s == "tan") return LangevinScale::tan;
  throw Error("UnknownScaling", "'" + s + "'");
}

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::uniform: return "uniform";
    case Schedule::exponential: return "exponential";
    case Schedule::quadratic: return "quadratic";
  }
  return "?";
}

std::string to_string(LangevinScale s) {
  return s == LangevinScale::inv_t ? "inv_t" : "tan";
}

double schedule_value(Schedule kind, int n, int n_steps) {
  if (n_steps < 1 || n < 0 || n > n_steps)
    throw Error("IndexOutOfRange",
                "step " + std::to_string(n) + " of " + std::to_string(n_steps));
  const double u = double(n) / n_steps;
  switch (kind) {
    case Schedule::uniform: return u;
    case Schedule::exponential:
      // (1 - 10^(-2u)) / (1 - 10^-2); both endpoints land exactly.
      return (1.0 - std::pow(10.0, -2.0 * u)) / (1.0 - 1e-2);
    case Schedule::quadratic: return u * u;
  }
  return u;
}

double langevin_scale(LangevinScale kind, double t) {
  if (kind == LangevinScale::inv_t) {
    if (t <= 1e-9) throw Error("TimeAtZero", "inv_t scaling at t = " + std::to_string(t));
    return 1.0 / t;
  }
  if (t < 0.0 || t > 1.0)
    throw Error("TimeOutOfRange", "tan scaling at t = " + std::to_string(t));
  return (pi / 2.0) * std::tan((pi / 2.0) * (1.0 - t));
}

double score_from_velocity(double v, double x_t, double t) {
  if (1.0 - t < 1e-9) throw Error("TimeAtOne", "score singular at t = " + std::to_string(t));
  return (t * v - x_t) / (1.0 - t);
}

ScorePair score_from_velocity(const Velocity& v, const SamplerState& state, double t_x,
                              double t_z) {
  const int L = int(state.x.size());
  ScorePair s;
  s.s_x.resize(L);
  s.s_z = Tensor::zeros({L, latent_dim});
  for (int i = 0; i < L; ++i)
    for (int k = 0; k < 3; ++k)
      s.s_x[i][k] = score_from_velocity(v.v_x[i][k], state.x[i][k], t_x);
  for (size_t i = 0; i < s.s_z.v.size(); ++i)
    s.s_z.v[i] = score_from_velocity(v.v_z.v[i], state.z.v[i], t_z);
  return s;
}

VelocityFn model_velocity(const FlowModel& model) {
  return [&model](const std::vector<Vec3>& x, const Tensor& z, double t_x, double t_z) {
    return model.velocity(x, z, t_x, t_z);
  };
}

void em_step(SamplerState& state, const VelocityFn& velocity, const SamplerConfig& cfg,
             int n, Rng& rng) {
  const int N = cfg.n_steps;
  if (n < 0 || n >= N)
    throw Error("IndexOutOfRange", "step " + std::to_string(n) + " of " + std::to_string(N));
  const double t_x = schedule_value(cfg.schedule_x, n, N);
  const double t_z = schedule_value(cfg.schedule_z, n, N);
  const double dt_x = schedule_value(cfg.schedule_x, n + 1, N) - t_x;
  const double dt_z = schedule_value(cfg.schedule_z, n + 1, N) - t_z;

  const Velocity v = velocity(state.x, state.z, t_x, t_z);

  // Scaling functions are singular at both clock endpoints, so the
  // stochastic part runs only on interior steps.
  const bool interior = n > 0 && n < N - 1;
  const bool lx = interior && cfg.use_langevin_x;
  const bool lz = interior && cfg.use_langevin_z;
  const double beta_x = lx ? langevin_scale(cfg.langevin_x, t_x) : 0.0;
  const double beta_z = lz ? langevin_scale(cfg.langevin_z, t_z) : 0.0;
  const double noise_x = lx ? std::sqrt(2.0 * beta_x * cfg.eta_x * dt_x) : 0.0;
  const double noise_z = lz ? std::sqrt(2.0 * beta_z * cfg.eta_z * dt_z) : 0.0;

  for (int i = 0; i < int(state.x.size()); ++i)
    for (int k = 0; k < 3; ++k) {
      double drift = v.v_x[i][k];
      if (lx) drift += beta_x * score_from_velocity(v.v_x[i][k], state.x[i][k], t_x);
      state.x[i][k] += drift * dt_x + (noise_x > 0 ? noise_x * rng.normal() : 0.0);
    }
  for (size_t i = 0; i < state.z.v.size(); ++i) {
    double drift = v.v_z.v[i];
    if (lz) drift += beta_z * score_from_velocity(v.v_z.v[i], state.z.v[i], t_z);
    state.z.v[i] += drift * dt_z + (noise_z > 0 ? noise_z * rng.normal() : 0.0);
  }
}

void integrate(SamplerState& state, const VelocityFn& velocity, const SamplerConfig& cfg,
               Rng& rng) {
  for (int n = 0; n < cfg.n_steps; ++n) em_step(state, velocity, cfg, n, rng);
}

ProteinStructure generate(const FlowModel& model, const Vae& vae, int length,
                          const SamplerConfig& cfg, Rng& rng) {
  if (length < 1 || length > max_generate_length)
    throw Error("LengthOutOfRange", "length " + std::to_string(length));

  SamplerState state;
  state.x.resize(length);
  for (auto& v : state.x) v = rng.normal3();
  state.z = Tensor::zeros({length, latent_dim});
  for (auto& e : state.z.v) e = rng.normal();

  integrate(state, model_velocity(model), cfg, rng);

  // Match the training-time frame before decoding.
  Vec3 centroid{0, 0, 0};
  for (const auto& v : state.x) centroid = centroid + v;
  centroid = (1.0 / length) * centroid;
  for (auto& v : state.x) v = v - centroid;

  return vae.decode(state.x, state.z).structure;
}

}  // namespace plfm
