#include "plfm/featurize.hpp"

#include <cmath>

namespace plfm {

int bin_index(double x, const BinSpec& spec) {
  if (std::isnan(x)) throw Error("InvalidArgument", "cannot bin NaN");
  if (spec.circular) {
    double w = x - 2.0 * M_PI * std::floor((x + M_PI) / (2.0 * M_PI));
    int b = int(std::floor((w - spec.lo) / (spec.hi - spec.lo) * spec.n_bins));
    return std::max(0, std::min(spec.n_bins - 1, b));
  }
  if (x <= spec.lo) return 0;
  if (x >= spec.hi) return spec.n_bins - 1;
  return int(std::floor((x - spec.lo) / (spec.hi - spec.lo) * spec.n_bins));
}

void bin_onehot(double x, const BinSpec& spec, double* out) {
  for (int i = 0; i < spec.n_bins; ++i) out[i] = 0.0;
  out[bin_index(x, spec)] = 1.0;
}

int relseq_class(int i, int j) {
  int d = j - i;
  if (d < -64) return 0;
  if (d > 64) return relseq_classes - 1;
  return d + 65;
}

FeaturePair encoder_features(const ProteinStructure& p) {
  const int L = p.length();
  FeaturePair out;
  out.seq = Tensor::zeros({L, encoder_seq_width});
  out.pair = Tensor::zeros({L * L, encoder_pair_width});

  auto torsions = backbone_torsions(p);
  auto chis = chi_angles(p);

  for (int i = 0; i < L; ++i) {
    double* row = &out.seq.v[size_t(i) * encoder_seq_width];
    const Vec3& ca = p.atom(i, slot_CA);
    for (int s = 0; s < num_atom_slots; ++s) {
      if (!p.has_atom(i, s)) continue;  // zero block for absent atoms
      const Vec3& a = p.atom(i, s);
      row[3 * s + 0] = a[0];
      row[3 * s + 1] = a[1];
      row[3 * s + 2] = a[2];
      row[111 + 3 * s + 0] = a[0] - ca[0];
      row[111 + 3 * s + 1] = a[1] - ca[1];
      row[111 + 3 * s + 2] = a[2] - ca[2];
    }
    row[222 + int(p.seq[i])] = 1.0;
    for (int k = 0; k < 4; ++k)
      if (chis[i].defined[k]) bin_onehot(chis[i].chi[k], angle_bins, row + 242 + 20 * k);
    const BackboneTorsions& t = torsions[i];
    if (!std::isnan(t.phi)) bin_onehot(t.phi, angle_bins, row + 322);
    if (!std::isnan(t.psi)) bin_onehot(t.psi, angle_bins, row + 342);
    if (!std::isnan(t.omega)) bin_onehot(t.omega, angle_bins, row + 362);
  }

  const int backbone_slots[4] = {slot_N, slot_CA, slot_C, slot_O};
  for (int i = 0; i < L; ++i) {
    bool frame_i = p.has_atom(i, slot_N) && p.has_atom(i, slot_C);
    for (int j = 0; j < L; ++j) {
      double* row = &out.pair.v[(size_t(i) * L + j) * encoder_pair_width];
      row[relseq_class(i, j)] = 1.0;
      if (i != j && frame_i && p.has_atom(j, slot_N) && p.has_atom(j, slot_C)) {
        PairOrientation o = relative_orientation(p, i, j);
        bin_onehot(o.omega, angle_bins, row + relseq_classes);
        bin_onehot(o.theta, angle_bins, row + relseq_classes + 20);
        bin_onehot(o.phi, angle_bins, row + relseq_classes + 40);
      }
      for (int a = 0; a < 4; ++a) {
        if (i == j || !p.has_atom(j, backbone_slots[a])) continue;
        double dist = norm(p.atom(i, slot_CA) - p.atom(j, backbone_slots[a]));
        bin_onehot(dist, encoder_dist_bins, row + relseq_classes + 60 + 20 * a);
      }
    }
  }
  return out;
}

FeaturePair decoder_features(const std::vector<Vec3>& x_ca, const Tensor& z) {
  const int L = int(x_ca.size());
  if (z.shape != std::vector<int>({L, latent_dim}))
    throw Error("ShapeMismatch", "latents must be [L, 8]");

  FeaturePair out;
  out.seq = Tensor::zeros({L, decoder_seq_width});
  out.pair = Tensor::zeros({L * L, decoder_pair_width});

  for (int i = 0; i < L; ++i) {
    double* row = &out.seq.v[size_t(i) * decoder_seq_width];
    row[0] = x_ca[size_t(i)][0];
    row[1] = x_ca[size_t(i)][1];
    row[2] = x_ca[size_t(i)][2];
    for (int k = 0; k < latent_dim; ++k) row[3 + k] = z.v[size_t(i) * latent_dim + k];
  }
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      double* row = &out.pair.v[(size_t(i) * L + j) * decoder_pair_width];
      row[relseq_class(i, j)] = 1.0;
      if (i != j)
        bin_onehot(norm(x_ca[size_t(i)] - x_ca[size_t(j)]), decoder_dist_bins,
                   row + relseq_classes);
    }
  return out;
}

FeaturePair denoiser_features(const std::vector<Vec3>& x_ca, const Tensor& z) {
  return decoder_features(x_ca, z);
}

}  // namespace plfm
