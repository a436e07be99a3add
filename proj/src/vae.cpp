#include "plfm/vae.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace plfm {

namespace {

using nlohmann::json;

uint64_t derive_seed(uint64_t seed, const char* label) {
  return splitmix64(seed ^ fnv1a64(label));
}

constexpr int mu_dec_width = (num_atom_slots - 1) * 3;  // 36 non-CA slots

int decoder_out_width(bool fully_latent) {
  return num_residue_types + mu_dec_width + (fully_latent ? 3 : 0);
}

// Column block for a non-CA slot inside the decoder coordinate head.
int slot_column(int slot) { return slot < slot_CA ? slot : slot - 1; }

NetConfig sanitized(NetConfig c) {
  c.time_conditioned = false;  // the VAE trunks are untimed by construction
  return c;
}

json net_config_json(const NetConfig& c) {
  return json{{"c_seq", c.c_seq},     {"c_pair", c.c_pair},
              {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
              {"time_conditioned", c.time_conditioned},
              {"time_embed_dim", c.time_embed_dim}};
}

NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  c.c_seq = j.at("c_seq").get<int>();
  c.c_pair = j.at("c_pair").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.time_conditioned = j.at("time_conditioned").get<bool>();
  c.time_embed_dim = j.at("time_embed_dim").get<int>();
  return c;
}

std::vector<Vec3> ca_coords(const ProteinStructure& p) {
  std::vector<Vec3> x(p.length());
  for (int i = 0; i < p.length(); ++i) x[i] = p.atom(i, slot_CA);
  return x;
}

}  // namespace

Vae::Vae(const VaeConfig& cfg)
    : cfg_([&] {
        VaeConfig c = cfg;
        c.encoder = sanitized(c.encoder);
        c.decoder = sanitized(c.decoder);
        return c;
      }()),
      enc_(cfg_.encoder, encoder_seq_width, encoder_pair_width, 2 * latent_dim,
           derive_seed(cfg_.seed, "vae-enc")),
      dec_(cfg_.decoder, decoder_seq_width, decoder_pair_width,
           decoder_out_width(cfg_.fully_latent), derive_seed(cfg_.seed, "vae-dec")) {
  for (const auto& [name, var] : enc_.params().items) joint_.items.emplace_back("enc." + name, var);
  for (const auto& [name, var] : dec_.params().items) joint_.items.emplace_back("dec." + name, var);
}

LatentState Vae::encode(const ProteinStructure& p, Rng* rng) const {
  const ProteinStructure c = centered(p);
  const FeaturePair f = encoder_features(c);
  const Tensor out = enc_.forward(f.seq, f.pair)->val;
  const int L = c.length();

  LatentState ls;
  ls.mu = Tensor::zeros({L, latent_dim});
  ls.log_sigma = Tensor::zeros({L, latent_dim});
  ls.z = Tensor::zeros({L, latent_dim});
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < latent_dim; ++j) {
      const double mu = out.v[size_t(i) * 2 * latent_dim + j];
      const double logs = out.v[size_t(i) * 2 * latent_dim + latent_dim + j];
      ls.mu.v[size_t(i) * latent_dim + j] = mu;
      ls.log_sigma.v[size_t(i) * latent_dim + j] = logs;
      ls.z.v[size_t(i) * latent_dim + j] =
          rng ? mu + std::exp(logs) * rng->normal() : mu;
    }
  return ls;
}

VaeDecoded Vae::decode(const std::vector<Vec3>& x_ca, const Tensor& z) const {
  const int L = int(x_ca.size());
  if (z.rows() != L || z.cols() != latent_dim)
    throw Error("ShapeMismatch", "latents must be [length, " + std::to_string(latent_dim) + "]");

  const std::vector<Vec3> x_in =
      cfg_.fully_latent ? std::vector<Vec3>(L, Vec3{0, 0, 0}) : x_ca;
  const FeaturePair f = decoder_features(x_in, z);
  const Tensor out = dec_.forward(f.seq, f.pair)->val;
  const int W = out.cols();

  VaeDecoded d;
  d.logits = Tensor::zeros({L, num_residue_types});
  d.seq.resize(L);
  for (int i = 0; i < L; ++i) {
    int best = 0;
    for (int k = 0; k < num_residue_types; ++k) {
      const double v = out.v[size_t(i) * W + k];
      d.logits.v[size_t(i) * num_residue_types + k] = v;
      if (v > out.v[size_t(i) * W + best]) best = k;
    }
    d.seq[i] = ResidueType(best);
  }

  d.structure = ProteinStructure::empty(L);
  d.structure.seq = d.seq;
  for (int i = 0; i < L; ++i) {
    Vec3 ca = x_ca[i];
    if (cfg_.fully_latent) {
      const size_t base = size_t(i) * W + num_residue_types + mu_dec_width;
      ca = Vec3{out.v[base], out.v[base + 1], out.v[base + 2]};
    }
    d.structure.set_atom(i, slot_CA, ca);
    for (int slot : residue_atoms(d.seq[i])) {
      if (slot == slot_CA) continue;
      const size_t base = size_t(i) * W + num_residue_types + 3 * slot_column(slot);
      d.structure.set_atom(i, slot, Vec3{out.v[base], out.v[base + 1], out.v[base + 2]});
    }
  }
  return d;
}

ProteinStructure Vae::reconstruct(const ProteinStructure& p, Rng* rng) const {
  const ProteinStructure c = centered(p);
  const LatentState ls = encode(c, rng);
  return decode(ca_coords(c), ls.z).structure;
}

Var Vae::loss(const ProteinStructure& p, Rng& rng, VaeLossParts* parts) const {
  const ProteinStructure c = centered(p);
  const int L = c.length();

  const FeaturePair ef = encoder_features(c);
  const Var enc_out = enc_.forward(ef.seq, ef.pair);
  const Var mu = slice_cols(enc_out, 0, latent_dim);
  const Var logs = slice_cols(enc_out, latent_dim, 2 * latent_dim);

  Tensor eps = Tensor::zeros({L, latent_dim});
  for (auto& e : eps.v) e = rng.normal();
  const Var z = add(mu, mul(vexp(logs), constant(eps)));

  const std::vector<Vec3> x_ca = ca_coords(c);
  const std::vector<Vec3> x_in =
      cfg_.fully_latent ? std::vector<Vec3>(L, Vec3{0, 0, 0}) : x_ca;
  Tensor xca_t = Tensor::zeros({L, 3});
  for (int i = 0; i < L; ++i)
    for (int k = 0; k < 3; ++k) xca_t.v[size_t(i) * 3 + k] = x_in[i][k];

  // The pair features depend only on CA geometry, so they stay constant;
  // the latent track enters the graph so gradients reach the encoder.
  const FeaturePair df = decoder_features(x_in, z->val);
  const Var dec_in = concat_cols(constant(xca_t), z);
  const Var dec_out = dec_.forward(dec_in, df.pair);

  std::vector<int> labels(L);
  for (int i = 0; i < L; ++i) labels[i] = int(c.seq[i]);
  const Var ce = cross_entropy_logits(slice_cols(dec_out, 0, num_residue_types), labels);

  Tensor target = Tensor::zeros({L, mu_dec_width});
  Tensor tmask = Tensor::zeros({L, mu_dec_width});
  for (int i = 0; i < L; ++i)
    for (int slot = 0; slot < num_atom_slots; ++slot) {
      if (slot == slot_CA || !c.has_atom(i, slot)) continue;
      const Vec3 v = c.atom(i, slot);
      const size_t base = size_t(i) * mu_dec_width + 3 * slot_column(slot);
      for (int k = 0; k < 3; ++k) {
        target.v[base + k] = v[k];
        tmask.v[base + k] = 1.0;
      }
    }
  const Var mu_dec =
      slice_cols(dec_out, num_residue_types, num_residue_types + mu_dec_width);
  Var coord = scale(masked_sse(mu_dec, target, tmask), 0.5);

  if (cfg_.fully_latent) {
    Tensor tca = Tensor::zeros({L, 3}), mca = Tensor::zeros({L, 3});
    for (int i = 0; i < L; ++i)
      for (int k = 0; k < 3; ++k) {
        tca.v[size_t(i) * 3 + k] = x_ca[i][k];
        mca.v[size_t(i) * 3 + k] = 1.0;
      }
    const Var ca_pred = slice_cols(dec_out, num_residue_types + mu_dec_width,
                                   num_residue_types + mu_dec_width + 3);
    coord = add(coord, scale(masked_sse(ca_pred, tca, mca), 0.5));
  }

  const Var kl = kl_diag_gaussian(mu, logs);
  const Var total = add(add(ce, coord), scale(kl, cfg_.beta));
  if (parts) {
    parts->ce = ce->val.v[0];
    parts->coord_mse = coord->val.v[0];
    parts->kl = kl->val.v[0];
    parts->total = total->val.v[0];
  }
  return total;
}

Tensor perturb_latent(const Tensor& z, int residue, double magnitude, Rng& rng) {
  if (z.cols() != latent_dim)
    throw Error("ShapeMismatch", "latents must have " + std::to_string(latent_dim) + " columns");
  if (residue < 0 || residue >= z.rows())
    throw Error("IndexOutOfRange", "residue " + std::to_string(residue));
  std::vector<double> dir(latent_dim);
  double norm2 = 0;
  do {
    norm2 = 0;
    for (auto& d : dir) {
      d = rng.normal();
      norm2 += d * d;
    }
  } while (norm2 == 0);
  const double inv = 1.0 / std::sqrt(norm2);
  Tensor out = z;
  for (int j = 0; j < latent_dim; ++j)
    out.v[size_t(residue) * latent_dim + j] += magnitude * dir[j] * inv;
  return out;
}

std::vector<TrainCurveRow> train_vae(Vae& vae, const std::vector<ProteinStructure>& data,
                                     const VaeTrainConfig& cfg, TrainState& state, Ema* ema) {
  if (data.empty()) throw Error("InvalidArgument", "empty training set");
  state.adam.cfg.lr = cfg.lr;
  if (ema && ema->decay == 0.0) ema->decay = cfg.ema_decay;

  std::vector<TrainCurveRow> rows;
  while (state.step < cfg.steps) {
    Var total;
    VaeLossParts acc;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = state.rng.uniform_int(0, int(data.size()) - 1);
      VaeLossParts parts;
      Var l = vae.loss(data[idx], state.rng, &parts);
      total = total ? add(total, l) : l;
      acc.ce += parts.ce;
      acc.coord_mse += parts.coord_mse;
      acc.kl += parts.kl;
      acc.total += parts.total;
    }
    total = scale(total, 1.0 / cfg.batch_size);
    backward(total);
    state.adam.step(vae.trainable());
    if (ema && ema->enabled()) ema->update(vae.trainable());
    ++state.step;

    if (state.step % cfg.log_every == 0 || state.step == cfg.steps) {
      const double inv = 1.0 / cfg.batch_size;
      rows.push_back({state.step, acc.total * inv, acc.ce * inv, acc.coord_mse * inv,
                      acc.kl * inv});
    }
  }
  return rows;
}

void save_vae(const std::string& path, const Vae& vae, const TrainState* state) {
  const VaeConfig& c = vae.config();
  json meta{{"kind", "vae"},
            {"config", {{"beta", c.beta},
                        {"fully_latent", c.fully_latent},
                        {"seed", c.seed},
                        {"encoder", net_config_json(c.encoder)},
                        {"decoder", net_config_json(c.decoder)}}}};
  Checkpoint ckpt;
  if (state) {
    meta["train"] = {{"step", state->step},
                     {"rng", state->rng.state()},
                     {"adam_t", state->adam.t},
                     {"adam_lr", state->adam.cfg.lr}};
    pack_adam(ckpt, "vae.", state->adam);
  }
  meta["format"] = 1;
  ckpt.meta = meta.dump();
  pack_params(ckpt, "vae.", vae.trainable());
  save_checkpoint(path, ckpt);
}

Vae load_vae(const std::string& path, TrainState* state) {
  const Checkpoint ckpt = load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.meta);
  } catch (const json::exception& e) {
    throw Error("MalformedCheckpoint", std::string("bad metadata: ") + e.what());
  }
  if (meta.value("kind", "") != "vae")
    throw Error("MalformedCheckpoint", "checkpoint kind is not 'vae'");

  VaeConfig cfg;
  const json& jc = meta.at("config");
  cfg.beta = jc.at("beta").get<double>();
  cfg.fully_latent = jc.at("fully_latent").get<bool>();
  cfg.seed = jc.at("seed").get<uint64_t>();
  cfg.encoder = net_config_from_json(jc.at("encoder"));
  cfg.decoder = net_config_from_json(jc.at("decoder"));

  Vae vae(cfg);
  unpack_params(ckpt, "vae.", vae.trainable());
  if (state && meta.contains("train")) {
    const json& jt = meta.at("train");
    state->step = jt.at("step").get<int64_t>();
    state->rng.set_state(jt.at("rng").get<std::string>());
    state->adam.t = jt.at("adam_t").get<int64_t>();
    state->adam.cfg.lr = jt.at("adam_lr").get<double>();
    unpack_adam(ckpt, "vae.", state->adam);
  }
  return vae;
}

}  // namespace plfm
