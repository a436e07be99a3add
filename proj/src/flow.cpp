#include "plfm/flow.hpp"

#include <cmath>

#include "json.hpp"

namespace plfm {

namespace {

using nlohmann::json;

NetConfig timed(NetConfig c) {
  c.time_conditioned = true;
  return c;
}

}  // namespace

TimePair sample_times(Rng& rng, const TimeSamplerConfig& cfg) {
  auto one = [&](double a, double b) {
    if (rng.uniform() < cfg.uniform_weight) return rng.uniform();
    return rng.beta(a, b);
  };
  TimePair t;
  t.t_x = one(cfg.coord_a, cfg.coord_b);
  t.t_z = one(cfg.latent_a, cfg.latent_b);
  return t;
}

FlowModel::FlowModel(const NetConfig& cfg, uint64_t seed)
    : cfg_(timed(cfg)),
      seed_(seed),
      net_(cfg_, decoder_seq_width, decoder_pair_width, 3 + latent_dim,
           splitmix64(seed ^ fnv1a64("flow-denoiser"))) {}

Velocity FlowModel::velocity(const std::vector<Vec3>& x_t, const Tensor& z_t, double t_x,
                             double t_z) const {
  const int L = int(x_t.size());
  if (z_t.rows() != L || z_t.cols() != latent_dim)
    throw Error("ShapeMismatch", "latents must be [length, " + std::to_string(latent_dim) + "]");
  const FeaturePair f = denoiser_features(x_t, z_t);
  const Tensor out = net_.forward(f.seq, f.pair, t_x, t_z)->val;
  const int W = out.cols();

  Velocity v;
  v.v_x.resize(L);
  v.v_z = Tensor::zeros({L, latent_dim});
  for (int i = 0; i < L; ++i) {
    v.v_x[i] = Vec3{out.v[size_t(i) * W], out.v[size_t(i) * W + 1], out.v[size_t(i) * W + 2]};
    for (int j = 0; j < latent_dim; ++j)
      v.v_z.v[size_t(i) * latent_dim + j] = out.v[size_t(i) * W + 3 + j];
  }
  return v;
}

Var cfm_loss(const FlowModel& model, const Vae& vae, const ProteinStructure& p, Rng& rng,
             const TimeSamplerConfig& times, CfmLossParts* parts) {
  const ProteinStructure c = centered(p);
  const int L = c.length();

  // Clean endpoints: centered CA coordinates and a fresh posterior draw.
  std::vector<Vec3> x1(L);
  for (int i = 0; i < L; ++i) x1[i] = c.atom(i, slot_CA);
  const Tensor z1 = vae.encode(c, &rng).z;

  std::vector<Vec3> x0(L);
  for (auto& v : x0) v = rng.normal3();
  Tensor z0 = Tensor::zeros({L, latent_dim});
  for (auto& e : z0.v) e = rng.normal();

  const TimePair t = sample_times(rng, times);

  std::vector<Vec3> xt(L);
  for (int i = 0; i < L; ++i)
    for (int k = 0; k < 3; ++k) xt[i][k] = (1 - t.t_x) * x0[i][k] + t.t_x * x1[i][k];
  Tensor zt = Tensor::zeros({L, latent_dim});
  for (size_t i = 0; i < zt.v.size(); ++i) zt.v[i] = (1 - t.t_z) * z0.v[i] + t.t_z * z1.v[i];

  const FeaturePair f = denoiser_features(xt, zt);
  const Var out = model.net().forward(f.seq, f.pair, t.t_x, t.t_z);

  Tensor ux = Tensor::zeros({L, 3}), mx = Tensor::zeros({L, 3});
  for (int i = 0; i < L; ++i)
    for (int k = 0; k < 3; ++k) {
      ux.v[size_t(i) * 3 + k] = x1[i][k] - x0[i][k];
      mx.v[size_t(i) * 3 + k] = 1.0;
    }
  Tensor uz = Tensor::zeros({L, latent_dim}), mz = Tensor::zeros({L, latent_dim});
  for (size_t i = 0; i < uz.v.size(); ++i) {
    uz.v[i] = z1.v[i] - z0.v[i];
    mz.v[i] = 1.0;
  }

  const Var coord = masked_sse(slice_cols(out, 0, 3), ux, mx);
  const Var latent = masked_sse(slice_cols(out, 3, 3 + latent_dim), uz, mz);
  const Var total = add(coord, latent);
  if (parts) {
    parts->coord = coord->val.v[0];
    parts->latent = latent->val.v[0];
    parts->total = total->val.v[0];
  }
  return total;
}

std::vector<TrainCurveRow> train_flow(FlowModel& model, const Vae& vae,
                                      const std::vector<ProteinStructure>& data,
                                      const FlowTrainConfig& cfg, TrainState& state,
                                      Ema* ema) {
  if (data.empty()) throw Error("InvalidArgument", "empty training set");
  state.adam.cfg.lr = cfg.lr;
  if (ema && ema->decay == 0.0) ema->decay = cfg.ema_decay;

  std::vector<TrainCurveRow> rows;
  while (state.step < cfg.steps) {
    Var total;
    CfmLossParts acc;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = state.rng.uniform_int(0, int(data.size()) - 1);
      CfmLossParts parts;
      Var l = cfm_loss(model, vae, data[idx], state.rng, cfg.times, &parts);
      total = total ? add(total, l) : l;
      acc.coord += parts.coord;
      acc.latent += parts.latent;
      acc.total += parts.total;
    }
    total = scale(total, 1.0 / cfg.batch_size);
    backward(total);
    state.adam.step(model.net().params());
    if (ema && ema->enabled()) ema->update(model.net().params());
    ++state.step;

    if (state.step % cfg.log_every == 0 || state.step == cfg.steps) {
      const double inv = 1.0 / cfg.batch_size;
      rows.push_back({state.step, acc.total * inv, acc.coord * inv, acc.latent * inv, 0.0});
    }
  }
  return rows;
}

void save_flow(const std::string& path, const FlowModel& model, const TrainState* state) {
  const NetConfig& c = model.config();
  json meta{{"kind", "flow"},
            {"format", 1},
            {"config", {{"c_seq", c.c_seq},
                        {"c_pair", c.c_pair},
                        {"n_layers", c.n_layers},
                        {"n_heads", c.n_heads},
                        {"time_conditioned", c.time_conditioned},
                        {"time_embed_dim", c.time_embed_dim}}},
            {"seed", model.seed()}};
  Checkpoint ckpt;
  if (state) {
    meta["train"] = {{"step", state->step},
                     {"rng", state->rng.state()},
                     {"adam_t", state->adam.t},
                     {"adam_lr", state->adam.cfg.lr}};
    pack_adam(ckpt, "flow.", state->adam);
  }
  ckpt.meta = meta.dump();
  pack_params(ckpt, "flow.", model.net().params());
  save_checkpoint(path, ckpt);
}

FlowModel load_flow(const std::string& path, TrainState* state) {
  const Checkpoint ckpt = load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.meta);
  } catch (const json::exception& e) {
    throw Error("MalformedCheckpoint", std::string("bad metadata: ") + e.what());
  }
  if (meta.value("kind", "") != "flow")
    throw Error("MalformedCheckpoint", "checkpoint kind is not 'flow'");

  NetConfig cfg;
  const json& jc = meta.at("config");
  cfg.c_seq = jc.at("c_seq").get<int>();
  cfg.c_pair = jc.at("c_pair").get<int>();
  cfg.n_layers = jc.at("n_layers").get<int>();
  cfg.n_heads = jc.at("n_heads").get<int>();
  cfg.time_conditioned = jc.at("time_conditioned").get<bool>();
  cfg.time_embed_dim = jc.at("time_embed_dim").get<int>();

  FlowModel model(cfg, meta.at("seed").get<uint64_t>());
  unpack_params(ckpt, "flow.", model.net().params());
  if (state && meta.contains("train")) {
    const json& jt = meta.at("train");
    state->step = jt.at("step").get<int64_t>();
    state->rng.set_state(jt.at("rng").get<std::string>());
    state->adam.t = jt.at("adam_t").get<int64_t>();
    state->adam.cfg.lr = jt.at("adam_lr").get<double>();
    unpack_adam(ckpt, "flow.", state->adam);
  }
  return model;
}

}  // namespace plfm
