#include "plfm/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <queue>

#include "plfm/geometry.hpp"

namespace plfm {

namespace {
constexpr double pi = 3.14159265358979323846;
}

ProteinStructure CommandOracle::fold(const std::string& sequence) {
  const std::string cmd = command_ + " " + sequence;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw Error("OracleFailure", "could not launch '" + command_ + "'");
  std::string out;
  char buf[4096];
  size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  const int status = pclose(pipe);
  if (status != 0)
    throw Error("OracleFailure", "'" + command_ + "' exited with status " + std::to_string(status));
  try {
    return parse_pdb(out);
  } catch (const Error& e) {
    throw Error("OracleFailure", std::string("oracle output unparseable: ") + e.what());
  }
}

double all_atom_scrmsd(const ProteinStructure& a, const ProteinStructure& b) {
  if (a.length() != b.length())
    throw Error("LengthMismatch", "structures have lengths " + std::to_string(a.length()) +
                                      " and " + std::to_string(b.length()));
  std::vector<Vec3> pa, pb;
  for (int i = 0; i < a.length(); ++i)
    for (int s = 0; s < num_atom_slots; ++s)
      if (a.has_atom(i, s) && b.has_atom(i, s)) {
        pa.push_back(a.atom(i, s));
        pb.push_back(b.atom(i, s));
      }
  return kabsch_rmsd(pa, pb, true);
}

CodesignReport codesignability(const ProteinStructure& generated, FoldOracle& oracle) {
  CodesignReport r;
  r.refolded = oracle.fold(generated.sequence_one_letter());
  if (r.refolded.length() != generated.length())
    throw Error("LengthMismatch", "oracle returned length " +
                                      std::to_string(r.refolded.length()) + " for input " +
                                      std::to_string(generated.length()));
  r.scrmsd = all_atom_scrmsd(generated, r.refolded);
  r.codesignable = r.scrmsd < 2.0;
  return r;
}

double clash_score(const ProteinStructure& p) {
  const int L = p.length();
  struct AtomRef {
    int res, slot;
    Vec3 pos;
    double radius;
  };
  std::vector<AtomRef> atoms;
  std::vector<int> atom_id(size_t(L) * num_atom_slots, -1);
  for (int i = 0; i < L; ++i)
    for (int s = 0; s < num_atom_slots; ++s)
      if (p.has_atom(i, s)) {
        atom_id[size_t(i) * num_atom_slots + s] = int(atoms.size());
        atoms.push_back({i, s, p.atom(i, s), slot_vdw_radius(s)});
      }
  if (atoms.empty()) return 0.0;

  std::vector<std::vector<int>> adj(atoms.size());
  auto link = [&](int res_a, int slot_a, int res_b, int slot_b) {
    const int ia = atom_id[size_t(res_a) * num_atom_slots + slot_a];
    const int ib = atom_id[size_t(res_b) * num_atom_slots + slot_b];
    if (ia >= 0 && ib >= 0) {
      adj[ia].push_back(ib);
      adj[ib].push_back(ia);
    }
  };
  for (int i = 0; i < L; ++i) {
    for (const auto& [a, b] : residue_bonds(p.seq[i])) link(i, a, i, b);
    if (i + 1 < L) link(i, slot_C, i + 1, slot_N);
  }

  // Pairs within three bonds are covalent-neighborhood contacts, not
  // clashes; mark them per atom with a depth-3 BFS.
  int clashes = 0;
  std::vector<int> depth(atoms.size());
  for (size_t a = 0; a < atoms.size(); ++a) {
    std::fill(depth.begin(), depth.end(), -1);
    depth[a] = 0;
    std::queue<int> q;
    q.push(int(a));
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      if (depth[u] == 3) continue;
      for (int w : adj[u])
        if (depth[w] < 0) {
          depth[w] = depth[u] + 1;
          q.push(w);
        }
    }
    for (size_t b = a + 1; b < atoms.size(); ++b) {
      if (depth[b] >= 0 && depth[b] <= 3) continue;
      const double limit = atoms[a].radius + atoms[b].radius - 0.4;
      if (norm(atoms[a].pos - atoms[b].pos) < limit) ++clashes;
    }
  }
  return 1000.0 * clashes / double(atoms.size());
}

double ChiHistogram::bin_center(int b) const {
  const double w = 2.0 * pi / n_bins;
  return -pi + (b + 0.5) * w;
}

namespace {

int circular_bin(double angle, int n_bins) {
  // Wrap into (-pi, pi] then bin uniformly.
  double a = angle - 2.0 * pi * std::floor((angle + pi) / (2.0 * pi));
  if (a <= -pi) a += 2.0 * pi;
  int b = int((a + pi) / (2.0 * pi) * n_bins);
  if (b >= n_bins) b = n_bins - 1;
  if (b < 0) b = 0;
  return b;
}

}  // namespace

ChiHistogram chi_distribution(const std::vector<ProteinStructure>& corpus, ResidueType type,
                              int chi_index, int n_bins) {
  if (chi_index < 0 || chi_index >= 4)
    throw Error("IndexOutOfRange", "chi index " + std::to_string(chi_index));
  ChiHistogram h;
  h.n_bins = n_bins;
  h.mass.assign(n_bins, 0.0);
  int64_t count = 0;
  for (const auto& p : corpus) {
    const std::vector<ChiAngles> chis = chi_angles(p);
    for (int i = 0; i < p.length(); ++i) {
      if (p.seq[i] != type || !chis[i].defined[chi_index]) continue;
      h.mass[circular_bin(chis[i].chi[chi_index], n_bins)] += 1.0;
      ++count;
    }
  }
  if (count == 0)
    throw Error("EmptySelection", "no residues of type " + std::string(residue_three(type)) +
                                      " with chi" + std::to_string(chi_index + 1));
  for (auto& m : h.mass) m /= double(count);
  return h;
}

RotamerDensity build_rotamer_density(const std::vector<ProteinStructure>& corpus, int n_bins) {
  RotamerDensity d;
  d.n_bins = n_bins;
  for (int t = 0; t < num_residue_types; ++t) {
    const int n_chi = chi_definition(ResidueType(t)).n_chi;
    for (int k = 0; k < n_chi; ++k) {
      try {
        d.hist[t][k] = chi_distribution(corpus, ResidueType(t), k, n_bins);
        d.has[t][k] = true;
      } catch (const Error& e) {
        if (e.kind != "EmptySelection") throw;
      }
    }
  }
  return d;
}

double rotamer_outlier_fraction(const std::vector<ProteinStructure>& corpus,
                                const RotamerDensity& reference, double threshold) {
  int64_t bearing = 0, outliers = 0;
  for (const auto& p : corpus) {
    const std::vector<ChiAngles> chis = chi_angles(p);
    for (int i = 0; i < p.length(); ++i) {
      const int t = int(p.seq[i]);
      bool any = false, out = false;
      for (int k = 0; k < 4; ++k) {
        if (!chis[i].defined[k]) continue;
        any = true;
        if (!reference.has[t][k])
          throw Error("MissingReference", std::string(residue_three(p.seq[i])) + " chi" +
                                              std::to_string(k + 1) +
                                              " absent from reference density");
        const ChiHistogram& h = reference.hist[t][k];
        if (h.mass[circular_bin(chis[i].chi[k], h.n_bins)] < threshold) out = true;
      }
      if (any) {
        ++bearing;
        if (out) ++outliers;
      }
    }
  }
  if (bearing == 0) return 0.0;
  return double(outliers) / double(bearing);
}

int cluster_count(int n_items, const std::function<double(int, int)>& similarity,
                  double threshold) {
  if (n_items <= 0) return 0;
  std::vector<int> parent(n_items);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int i = 0; i < n_items; ++i)
    for (int j = i + 1; j < n_items; ++j)
      if (similarity(i, j) >= threshold) parent[find(i)] = find(j);
  int count = 0;
  for (int i = 0; i < n_items; ++i)
    if (find(i) == i) ++count;
  return count;
}

}  // namespace plfm
