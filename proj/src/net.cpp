#include "plfm/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace plfm {

Var ParamStore::create(const std::string& name, std::vector<int> shape, double stddev,
                       Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  if (stddev > 0)
    for (double& x : t.v) x = stddev * rng.normal();
  Var v = leaf(std::move(t));
  items.push_back({name, v});
  return v;
}

Var ParamStore::create_ones(const std::string& name, std::vector<int> shape) {
  Tensor t = Tensor::zeros(shape);
  for (double& x : t.v) x = 1.0;
  Var v = leaf(std::move(t));
  items.push_back({name, v});
  return v;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : items)
    if (n == name) return v;
  throw Error("MissingParameter", name);
}

size_t ParamStore::element_count() const {
  size_t n = 0;
  for (const auto& [name, v] : items) n += v->val.size();
  return n;
}

void Adam::step(ParamStore& params) {
  ++t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (auto& [name, p] : params.items) {
    if (p->grad.size() != p->val.size()) continue;  // no gradient this step
    Tensor& mt = m[name];
    Tensor& vt = v[name];
    if (mt.size() != p->val.size()) mt = Tensor::zeros(p->val.shape);
    if (vt.size() != p->val.size()) vt = Tensor::zeros(p->val.shape);
    for (size_t i = 0; i < p->val.size(); ++i) {
      double g = p->grad.v[i];
      mt.v[i] = cfg.beta1 * mt.v[i] + (1.0 - cfg.beta1) * g;
      vt.v[i] = cfg.beta2 * vt.v[i] + (1.0 - cfg.beta2) * g * g;
      double mhat = mt.v[i] / bc1;
      double vhat = vt.v[i] / bc2;
      p->val.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void Ema::update(const ParamStore& params) {
  if (!enabled()) return;
  for (const auto& [name, p] : params.items) {
    Tensor& s = shadow[name];
    if (s.size() != p->val.size()) s = p->val;
    for (size_t i = 0; i < p->val.size(); ++i)
      s.v[i] = decay * s.v[i] + (1.0 - decay) * p->val.v[i];
  }
}

void Ema::swap(ParamStore& params) {
  if (!enabled()) return;
  for (auto& [name, p] : params.items) {
    auto it = shadow.find(name);
    if (it != shadow.end()) std::swap(it->second.v, p->val.v);
  }
}

std::vector<double> time_embedding(double t, int dims) {
  std::vector<double> e(static_cast<size_t>(dims));
  const int half = dims / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::pow(1000.0, double(i) / double(std::max(1, half - 1)));
    e[size_t(i)] = std::sin(freq * t);
    e[size_t(half + i)] = std::cos(freq * t);
  }
  return e;
}

Network::Network(const NetConfig& cfg, int in_seq_width, int in_pair_width, int out_width,
                 uint64_t seed)
    : cfg_(cfg), in_seq_w_(in_seq_width), in_pair_w_(in_pair_width), out_w_(out_width) {
  Rng rng = Rng(seed).fork("net-init");
  const int C = cfg.c_seq, P = cfg.c_pair, H = cfg.n_heads, F = 4 * C;
  auto lin = [&](const std::string& n, int in, int out) {
    params_.create(n + ".w", {in, out}, 1.0 / std::sqrt(double(in)), rng);
    params_.create(n + ".b", {out}, 0.0, rng);
  };

  lin("in_seq", in_seq_w_, C);
  lin("in_pair", in_pair_w_, P);
  if (cfg.time_conditioned) {
    lin("time.fc1", 2 * cfg.time_embed_dim, C);
    lin("time.fc2", C, C);
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string b = "blk" + std::to_string(l) + ".";
    if (cfg.time_conditioned) {
      // zero-initialized: at init each block is the identity map and the
      // output cannot depend on (t_x, t_z)
      params_.create(b + "mod.w", {C, 6 * C}, 0.0, rng);
      params_.create(b + "mod.b", {6 * C}, 0.0, rng);
    } else {
      params_.create_ones(b + "ln1.g", {C});
      params_.create(b + "ln1.b", {C}, 0.0, rng);
      params_.create_ones(b + "ln2.g", {C});
      params_.create(b + "ln2.b", {C}, 0.0, rng);
    }
    lin(b + "q", C, C);
    lin(b + "k", C, C);
    lin(b + "v", C, C);
    lin(b + "o", C, C);
    lin(b + "bias", P, H);
    lin(b + "ff1", C, F);
    lin(b + "ff2", F, C);
  }
  params_.create_ones("final_ln.g", {C});
  params_.create("final_ln.b", {C}, 0.0, rng);
  lin("head", C, out_w_);
}

namespace {

Var linear(const ParamStore& ps, const std::string& n, const Var& x) {
  return add_rowvec(matmul(x, ps.find(n + ".w")), ps.find(n + ".b"));
}

}  // namespace

Var Network::forward_features(const Var& seq_feats, const Tensor& pair_feats, double t_x,
                              double t_z) const {
  const int rows = seq_feats->val.rows();
  if (seq_feats->val.cols() != in_seq_w_)
    throw Error("ShapeMismatch", "seq feature width " + std::to_string(seq_feats->val.cols()) +
                                     ", expected " + std::to_string(in_seq_w_));
  if (pair_feats.rows() != rows * rows || pair_feats.cols() != in_pair_w_)
    throw Error("ShapeMismatch", "pair features must be [rows^2, in_pair_width]");

  const int C = cfg_.c_seq, H = cfg_.n_heads;
  Var x = linear(params_, "in_seq", seq_feats);
  Var pr = linear(params_, "in_pair", constant(pair_feats));

  Var cond;
  if (cfg_.time_conditioned) {
    // embed the two times separately, concatenate, then a small MLP
    Tensor e = Tensor::zeros({1, 2 * cfg_.time_embed_dim});
    auto ex = time_embedding(t_x, cfg_.time_embed_dim);
    auto ez = time_embedding(t_z, cfg_.time_embed_dim);
    std::copy(ex.begin(), ex.end(), e.v.begin());
    std::copy(ez.begin(), ez.end(), e.v.begin() + cfg_.time_embed_dim);
    cond = linear(params_, "time.fc2", gelu(linear(params_, "time.fc1", constant(e))));
  }

  for (int l = 0; l < cfg_.n_layers; ++l) {
    std::string b = "blk" + std::to_string(l) + ".";
    Var sh1, sc1, g1, sh2, sc2, g2;
    if (cfg_.time_conditioned) {
      Var mod = linear(params_, b + "mod", cond);
      sh1 = slice_cols(mod, 0, C);
      sc1 = slice_cols(mod, C, 2 * C);
      g1 = slice_cols(mod, 2 * C, 3 * C);
      sh2 = slice_cols(mod, 3 * C, 4 * C);
      sc2 = slice_cols(mod, 4 * C, 5 * C);
      g2 = slice_cols(mod, 5 * C, 6 * C);
    }

    Var u = layer_norm(x);
    u = cfg_.time_conditioned
            ? add_rowvec(mul_rowvec(u, add_scalar(sc1, 1.0)), sh1)
            : add_rowvec(mul_rowvec(u, params_.find(b + "ln1.g")), params_.find(b + "ln1.b"));
    Var bias = reshape(linear(params_, b + "bias", pr), {rows, rows, H});
    Var att = attention_pair_bias(linear(params_, b + "q", u), linear(params_, b + "k", u),
                                  linear(params_, b + "v", u), bias, H);
    Var att_o = linear(params_, b + "o", att);
    x = add(x, cfg_.time_conditioned ? mul_rowvec(att_o, g1) : att_o);

    Var w = layer_norm(x);
    w = cfg_.time_conditioned
            ? add_rowvec(mul_rowvec(w, add_scalar(sc2, 1.0)), sh2)
            : add_rowvec(mul_rowvec(w, params_.find(b + "ln2.g")), params_.find(b + "ln2.b"));
    Var ff = linear(params_, b + "ff2", gelu(linear(params_, b + "ff1", w)));
    x = add(x, cfg_.time_conditioned ? mul_rowvec(ff, g2) : ff);
  }

  return add_rowvec(mul_rowvec(layer_norm(x), params_.find("final_ln.g")),
                    params_.find("final_ln.b"));
}

Var Network::forward(const Var& seq_feats, const Tensor& pair_feats, double t_x,
                     double t_z) const {
  return linear(params_, "head", forward_features(seq_feats, pair_feats, t_x, t_z));
}

Var Network::forward_features(const Tensor& seq_feats, const Tensor& pair_feats, double t_x,
                              double t_z) const {
  return forward_features(constant(seq_feats), pair_feats, t_x, t_z);
}

Var Network::forward(const Tensor& seq_feats, const Tensor& pair_feats, double t_x,
                     double t_z) const {
  return forward(constant(seq_feats), pair_feats, t_x, t_z);
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

namespace {

constexpr char ckpt_magic[8] = {'P', 'L', 'F', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t ckpt_version = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("MalformedCheckpoint", "truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("MalformedCheckpoint", "cannot open " + path + " for writing");
  f.write(ckpt_magic, 8);
  put<uint32_t>(f, ckpt_version);
  put<uint64_t>(f, ckpt.meta.size());
  f.write(ckpt.meta.data(), std::streamsize(ckpt.meta.size()));
  put<uint32_t>(f, uint32_t(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put<uint64_t>(f, name.size());
    f.write(name.data(), std::streamsize(name.size()));
    put<uint32_t>(f, uint32_t(t.shape.size()));
    for (int d : t.shape) put<uint64_t>(f, uint64_t(d));
    f.write(reinterpret_cast<const char*>(t.v.data()),
            std::streamsize(t.v.size() * sizeof(double)));
  }
  if (!f) throw Error("MalformedCheckpoint", "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("MalformedCheckpoint", "cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, ckpt_magic, 8) != 0)
    throw Error("MalformedCheckpoint", "bad magic in " + path);
  uint32_t version = get<uint32_t>(f);
  if (version != ckpt_version)
    throw Error("MalformedCheckpoint", "unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  uint64_t meta_len = get<uint64_t>(f);
  ckpt.meta.resize(meta_len);
  f.read(ckpt.meta.data(), std::streamsize(meta_len));
  if (!f) throw Error("MalformedCheckpoint", "truncated metadata");

  uint32_t count = get<uint32_t>(f);
  for (uint32_t i = 0; i < count; ++i) {
    uint64_t name_len = get<uint64_t>(f);
    std::string name(name_len, 0);
    f.read(name.data(), std::streamsize(name_len));
    uint32_t rank = get<uint32_t>(f);
    std::vector<int> shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = int(get<uint64_t>(f));
    Tensor t = Tensor::zeros(shape);
    f.read(reinterpret_cast<char*>(t.v.data()), std::streamsize(t.v.size() * sizeof(double)));
    if (!f) throw Error("MalformedCheckpoint", "truncated tensor " + name);
    ckpt.tensors.push_back({std::move(name), std::move(t)});
  }
  return ckpt;
}

void pack_params(Checkpoint& ckpt, const std::string& prefix, const ParamStore& params) {
  for (const auto& [name, v] : params.items)
    ckpt.tensors.push_back({prefix + "param." + name, v->val});
}

void unpack_params(const Checkpoint& ckpt, const std::string& prefix, ParamStore& params) {
  for (auto& [name, v] : params.items) {
    const Tensor* t = ckpt.find(prefix + "param." + name);
    if (!t) throw Error("MalformedCheckpoint", "missing tensor " + prefix + "param." + name);
    if (t->shape != v->val.shape)
      throw Error("MalformedCheckpoint", "shape mismatch for " + name);
    v->val = *t;
  }
}

void pack_adam(Checkpoint& ckpt, const std::string& prefix, const Adam& opt) {
  Tensor step = Tensor::zeros({1});
  step.v[0] = static_cast<double>(opt.t);
  ckpt.tensors.push_back({prefix + "adam.t", step});
  for (const auto& [name, t] : opt.m) ckpt.tensors.push_back({prefix + "adam.m." + name, t});
  for (const auto& [name, t] : opt.v) ckpt.tensors.push_back({prefix + "adam.v." + name, t});
}

void unpack_adam(const Checkpoint& ckpt, const std::string& prefix, Adam& opt) {
  opt.m.clear();
  opt.v.clear();
  if (const Tensor* step = ckpt.find(prefix + "adam.t"))
    opt.t = static_cast<int64_t>(std::llround(step->v[0]));
  for (const auto& [name, t] : ckpt.tensors) {
    const std::string mkey = prefix + "adam.m.";
    const std::string vkey = prefix + "adam.v.";
    if (name.rfind(mkey, 0) == 0) opt.m[name.substr(mkey.size())] = t;
    if (name.rfind(vkey, 0) == 0) opt.v[name.substr(vkey.size())] = t;
  }
}

}  // namespace plfm
