#include "plfm/motif.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "plfm/geometry.hpp"
#include "plfm/metrics.hpp"

namespace plfm {

namespace {

std::optional<long> parse_int(const std::string& s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  long v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

[[noreturn]] void parse_fail(size_t token_index, const std::string& token) {
  throw Error("ParseError",
              "token " + std::to_string(token_index) + ": '" + token + "'");
}

}  // namespace

ContigSpec parse_contig(const std::string& text) {
  ContigSpec spec;
  size_t pos = 0, token_index = 0;
  while (pos <= text.size()) {
    const size_t next = text.find('/', pos);
    const std::string tok =
        text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    pos = next == std::string::npos ? text.size() + 1 : next + 1;
    if (tok.empty()) {
      if (text.empty() && token_index == 0) break;
      parse_fail(token_index, tok);
    }

    ContigSegment seg;
    std::string body = tok;
    if (tok[0] >= 'A' && tok[0] <= 'Z') {
      seg.kind = ContigSegment::Kind::motif;
      seg.chain = tok[0];
      body = tok.substr(1);
    }
    const size_t dash = body.find('-');
    std::optional<long> a, b;
    if (dash == std::string::npos) {
      a = b = parse_int(body);
    } else {
      a = parse_int(body.substr(0, dash));
      b = parse_int(body.substr(dash + 1));
    }
    if (!a || !b || *a > *b) parse_fail(token_index, tok);

    if (seg.kind == ContigSegment::Kind::motif) {
      seg.start = int(*a);
      seg.end = int(*b);
    } else {
      seg.min_len = int(*a);
      seg.max_len = int(*b);
    }
    spec.segments.push_back(seg);
    ++token_index;
  }
  if (spec.segments.empty()) throw Error("EmptySpec", "contig has no segments");
  return spec;
}

std::string render_contig(const ContigSpec& spec) {
  std::string out;
  for (size_t i = 0; i < spec.segments.size(); ++i) {
    const ContigSegment& s = spec.segments[i];
    if (i) out += '/';
    if (s.kind == ContigSegment::Kind::motif) {
      out += s.chain;
      out += std::to_string(s.start);
      if (s.end != s.start) out += "-" + std::to_string(s.end);
    } else {
      out += std::to_string(s.min_len);
      if (s.max_len != s.min_len) out += "-" + std::to_string(s.max_len);
    }
  }
  return out;
}

int motif_segment_count(const ContigSpec& spec) {
  int runs = 0;
  bool in_motif = false;
  for (const auto& s : spec.segments) {
    const bool is_motif = s.kind == ContigSegment::Kind::motif;
    if (is_motif && !in_motif) ++runs;
    in_motif = is_motif;
  }
  return runs;
}

Placement sample_placement(const ContigSpec& spec, int min_total, int max_total, Rng& rng) {
  long fixed = 0, min_possible = 0, max_possible = 0;
  for (const auto& s : spec.segments) {
    if (s.kind == ContigSegment::Kind::motif) {
      fixed += s.motif_length();
    } else {
      min_possible += s.min_len;
      max_possible += s.max_len;
    }
  }
  min_possible += fixed;
  max_possible += fixed;
  const long lo = std::max<long>(min_total, min_possible);
  const long hi = std::min<long>(max_total, max_possible);
  if (min_total > max_total || lo > hi)
    throw Error("Infeasible", "bounds [" + std::to_string(min_total) + ", " +
                                  std::to_string(max_total) + "] vs achievable [" +
                                  std::to_string(min_possible) + ", " +
                                  std::to_string(max_possible) + "]");

  for (int attempt = 0; attempt < 100000; ++attempt) {
    Placement pl;
    long total = 0;
    for (const auto& s : spec.segments) {
      if (s.kind == ContigSegment::Kind::motif) {
        total += s.motif_length();
      } else {
        const int len = rng.uniform_int(s.min_len, s.max_len);
        pl.scaffold_lengths.push_back(len);
        total += len;
      }
    }
    if (total < lo || total > hi) continue;

    int cursor = 0;
    size_t scaffold_i = 0;
    for (const auto& s : spec.segments) {
      if (s.kind == ContigSegment::Kind::motif) {
        for (int k = 0; k < s.motif_length(); ++k) pl.positions.push_back(cursor++);
      } else {
        cursor += pl.scaffold_lengths[scaffold_i++];
      }
    }
    pl.total_length = cursor;
    return pl;
  }
  throw Error("Infeasible", "rejection sampling found no total in bounds");
}

MotifDetail detail_from_string(const std::string& s) {
  if (s == "all_atom") return MotifDetail::all_atom;
  if (s == "tip_atom") return MotifDetail::tip_atom;
  throw Error("UnknownDetail", "'" + s + "'");
}

MotifIndexing indexing_from_string(const std::string& s) {
  if (s == "indexed") return MotifIndexing::indexed;
  if (s == "unindexed") return MotifIndexing::unindexed;
  throw Error("UnknownIndexing", "'" + s + "'");
}

std::string to_string(MotifDetail d) {
  return d == MotifDetail::all_atom ? "all_atom" : "tip_atom";
}

std::string to_string(MotifIndexing m) {
  return m == MotifIndexing::indexed ? "indexed" : "unindexed";
}

int MotifTask::motif_size() const {
  int n = 0;
  for (const auto& s : motif_segments) n += s.length();
  return n;
}

std::vector<ResidueType> MotifTask::motif_sequence() const {
  std::vector<ResidueType> seq;
  for (const auto& s : motif_segments) seq.insert(seq.end(), s.seq.begin(), s.seq.end());
  return seq;
}

std::vector<Vec3> MotifTask::motif_ca() const {
  std::vector<Vec3> ca;
  for (const auto& s : motif_segments)
    for (int i = 0; i < s.length(); ++i) ca.push_back(s.atom(i, slot_CA));
  return ca;
}

MotifTask make_motif_task(const std::string& name, const ContigSpec& spec, int min_length,
                          int max_length, MotifDetail detail, MotifIndexing mode,
                          const std::vector<ReferenceChain>& chains) {
  MotifTask task;
  task.name = name;
  task.spec = spec;
  task.min_length = min_length;
  task.max_length = max_length;
  task.detail = detail;
  task.mode = mode;

  for (const auto& seg : spec.segments) {
    if (seg.kind != ContigSegment::Kind::motif) continue;
    const ReferenceChain* chain = nullptr;
    for (const auto& c : chains)
      if (c.chain == seg.chain) chain = &c;
    if (!chain)
      throw Error("MissingResidue", std::string("reference chain '") + seg.chain +
                                        "' not provided");

    ProteinStructure sub = ProteinStructure::empty(seg.motif_length());
    for (int n = seg.start; n <= seg.end; ++n) {
      const auto it = std::find(chain->resnum.begin(), chain->resnum.end(), n);
      if (it == chain->resnum.end())
        throw Error("MissingResidue",
                    std::string(1, seg.chain) + std::to_string(n) + " absent from reference");
      const int src = int(it - chain->resnum.begin());
      const int dst = n - seg.start;
      sub.seq[dst] = chain->structure.seq[src];
      sub.b_factor[dst] = chain->structure.b_factor[src];
      for (int s = 0; s < num_atom_slots; ++s)
        if (chain->structure.has_atom(src, s))
          sub.set_atom(dst, s, chain->structure.atom(src, s));
    }
    task.motif_segments.push_back(std::move(sub));
  }

  // Joint centering at the motif CA centroid gives the conditioning features
  // a canonical frame.
  Vec3 centroid{0, 0, 0};
  int count = 0;
  for (const auto& s : task.motif_segments)
    for (int i = 0; i < s.length(); ++i) {
      centroid = centroid + s.atom(i, slot_CA);
      ++count;
    }
  if (count > 0) {
    centroid = (1.0 / count) * centroid;
    for (auto& s : task.motif_segments)
      for (int i = 0; i < s.length(); ++i)
        for (int slot = 0; slot < num_atom_slots; ++slot)
          if (s.has_atom(i, slot)) s.atom(i, slot) = s.atom(i, slot) - centroid;
  }
  return task;
}

MotifConditioning motif_features(const MotifTask& task, const Placement& placement) {
  const int m = task.motif_size();
  if (int(placement.positions.size()) != m)
    throw Error("SizeMismatch", "placement has " + std::to_string(placement.positions.size()) +
                                    " motif positions, task has " + std::to_string(m));
  const int width =
      task.detail == MotifDetail::all_atom ? all_atom_feature_width : tip_feature_width;

  Tensor rows = Tensor::zeros({m, width});
  int r = 0;
  for (const auto& seg : task.motif_segments) {
    if (task.detail == MotifDetail::all_atom) {
      // Reuse the encoder recipe per segment so backbone torsions stay
      // within segment bounds.
      const FeaturePair f = encoder_features(seg);
      std::copy(f.seq.v.begin(), f.seq.v.end(), rows.v.begin() + size_t(r) * width);
      r += seg.length();
    } else {
      for (int i = 0; i < seg.length(); ++i, ++r) {
        double* row = rows.v.data() + size_t(r) * width;
        for (int slot : tip_atoms(seg.seq[i])) {
          if (!seg.has_atom(i, slot)) continue;
          const Vec3 v = seg.atom(i, slot);
          for (int k = 0; k < 3; ++k) row[3 * slot + k] = v[k];
        }
        row[3 * num_atom_slots + int(seg.seq[i])] = 1.0;
      }
    }
  }

  MotifConditioning cond;
  cond.detail = task.detail;
  cond.mode = task.mode;
  if (task.mode == MotifIndexing::unindexed) {
    cond.seq = std::move(rows);
    return cond;
  }

  const int L = placement.total_length;
  cond.seq = Tensor::zeros({L, width});
  for (int k = 0; k < m; ++k) {
    const int p = placement.positions[k];
    if (p < 0 || p >= L)
      throw Error("SizeMismatch", "motif position " + std::to_string(p) +
                                      " outside chain of length " + std::to_string(L));
    std::copy(rows.v.begin() + size_t(k) * width, rows.v.begin() + size_t(k + 1) * width,
              cond.seq.v.begin() + size_t(p) * width);
  }
  return cond;
}

Tensor conditioned_pair_features(const std::vector<Vec3>& x_ca, int extra_rows) {
  const int L = int(x_ca.size());
  const int R = L + extra_rows;
  const int W = conditioned_pair_width;
  const int sentinel = relseq_classes; // one-hot class for appended-row pairs
  Tensor out = Tensor::zeros({R * R, W});
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) {
      double* row = out.v.data() + size_t(i) * R * W + size_t(j) * W;
      if (i < L && j < L) {
        row[relseq_class(i, j)] = 1.0;
        if (i != j)
          bin_onehot(norm(x_ca[i] - x_ca[j]), decoder_dist_bins, row + relseq_classes + 1);
      } else {
        row[sentinel] = 1.0;
      }
    }
  return out;
}

std::vector<int> greedy_match(const std::vector<Vec3>& gt_ca,
                              const std::vector<Vec3>& generated_ca) {
  const int m = int(gt_ca.size()), L = int(generated_ca.size());
  if (m > L)
    throw Error("SizeMismatch", "motif of " + std::to_string(m) +
                                    " residues cannot match into " + std::to_string(L));
  std::vector<int> out(m);
  std::vector<char> claimed(L, 0);
  for (int k = 0; k < m; ++k) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < L; ++j) {
      if (claimed[j]) continue;
      const double d = norm(gt_ca[k] - generated_ca[j]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    claimed[best] = 1;
    out[k] = best;
  }
  return out;
}

ScaffoldReport evaluate_scaffold(const MotifTask& task, const ProteinStructure& generated,
                                 const ProteinStructure& refolded,
                                 const std::vector<int>* positions) {
  const int m = task.motif_size();
  const int L = generated.length();
  if (refolded.length() != L)
    throw Error("SizeMismatch", "refolded length " + std::to_string(refolded.length()) +
                                    " vs generated " + std::to_string(L));
  if (m > L)
    throw Error("SizeMismatch",
                "motif of " + std::to_string(m) + " residues vs chain of " + std::to_string(L));

  ScaffoldReport rep;
  const std::vector<Vec3> gt_ca = task.motif_ca();
  const std::vector<ResidueType> gt_seq = task.motif_sequence();

  if (positions) {
    if (int(positions->size()) != m)
      throw Error("SizeMismatch", "expected " + std::to_string(m) + " motif positions");
    for (int p : *positions)
      if (p < 0 || p >= L)
        throw Error("SizeMismatch", "motif position " + std::to_string(p) + " out of range");
    rep.positions = *positions;
  } else {
    std::vector<Vec3> gen_ca(L);
    for (int i = 0; i < L; ++i) gen_ca[i] = generated.atom(i, slot_CA);
    rep.positions = greedy_match(gt_ca, gen_ca);
  }

  rep.seq_recovered = true;
  for (int k = 0; k < m; ++k)
    if (generated.seq[rep.positions[k]] != gt_seq[k]) rep.seq_recovered = false;

  // Superpose generated motif CAs onto the reference motif; below three
  // points the frames are compared as-is.
  std::vector<Vec3> gen_motif_ca(m);
  for (int k = 0; k < m; ++k) gen_motif_ca[k] = generated.atom(rep.positions[k], slot_CA);
  Superposition sp;
  bool have_sp = false;
  if (m >= 3) {
    sp = superpose(gen_motif_ca, gt_ca);
    have_sp = true;
    rep.ca_rmsd = sp.rmsd;
  } else {
    rep.ca_rmsd = kabsch_rmsd(gen_motif_ca, gt_ca, false);
  }
  rep.ca_ok = rep.ca_rmsd < 1.0;

  double sse = 0;
  int n_scope = 0;
  int k = 0;
  for (const auto& seg : task.motif_segments)
    for (int i = 0; i < seg.length(); ++i, ++k) {
      const int pos = rep.positions[k];
      const std::vector<int>& scope = task.detail == MotifDetail::all_atom
                                          ? residue_atoms(seg.seq[i])
                                          : tip_atoms(seg.seq[i]);
      for (int slot : scope) {
        if (!seg.has_atom(i, slot) || !generated.has_atom(pos, slot)) continue;
        Vec3 g = generated.atom(pos, slot);
        if (have_sp) g = apply_superposition(sp, g);
        const Vec3 d = g - seg.atom(i, slot);
        sse += dot(d, d);
        ++n_scope;
      }
    }
  if (n_scope > 0) {
    rep.scope_rmsd = std::sqrt(sse / n_scope);
    rep.scope_ok = rep.scope_rmsd < 2.0;
  } else {
    // Nothing in scope to scaffold (tip detail over tip-less residues).
    rep.scope_rmsd = 0.0;
    rep.scope_ok = true;
  }

  rep.sc_rmsd = all_atom_scrmsd(generated, refolded);
  rep.codesignable = rep.sc_rmsd < 2.0;
  return rep;
}

}  // namespace plfm
