#pragma once

// Feature recipes feeding the transformer trunks. All blocks are plain
// concatenations of one-hot bins and raw coordinates; undefined angles and
// missing atoms contribute all-zero blocks rather than sentinel values.
// Coordinates are expected to be centered (CA centroid at the origin) by the
// caller before featurization.

#include <vector>

#include "plfm/geometry.hpp"
#include "plfm/protein.hpp"
#include "plfm/tensor.hpp"

namespace plfm {

inline constexpr int latent_dim = 8;  // per-residue latent width

struct BinSpec {
  double lo, hi;
  int n_bins;
  bool circular;  // wrap into (-pi, pi] instead of clamping
};

inline constexpr BinSpec angle_bins{-M_PI, M_PI, 20, true};
inline constexpr BinSpec encoder_dist_bins{1.0, 20.0, 20, false};
inline constexpr BinSpec decoder_dist_bins{1.0, 30.0, 30, false};

// Clamped (or wrapped) bin index; throws InvalidArgument on NaN.
int bin_index(double x, const BinSpec& spec);
// Writes a one-hot block of spec.n_bins doubles at out.
void bin_onehot(double x, const BinSpec& spec, double* out);

// Relative sequence offset classes: 0 = saturated below -64, 1..129 = offsets
// -64..+64, 130 = saturated above +64. Mirrored pairs sum to 130.
inline constexpr int relseq_classes = 131;
int relseq_class(int i, int j);

// Per-residue encoder block: raw atom coords (37x3), CA-relative coords
// (37x3), residue one-hot (20), binned chi (4x20), binned backbone torsions
// (3x20).
inline constexpr int encoder_seq_width = 37 * 3 + 37 * 3 + 20 + 4 * 20 + 3 * 20;
// Pair block: relseq (131), binned pair orientation angles (3x20), binned
// CA(i)-to-{N,CA,C,O}(j) distances (4x20).
inline constexpr int encoder_pair_width = relseq_classes + 3 * 20 + 4 * 20;

struct FeaturePair {
  Tensor seq;   // [rows, seq_width]
  Tensor pair;  // [rows*rows, pair_width]
};

FeaturePair encoder_features(const ProteinStructure& p);

// Decoder and denoiser share one recipe: per residue [x_ca | z] (3+8), pairs
// relseq (131) + binned CA-CA distance (30).
inline constexpr int decoder_seq_width = 3 + latent_dim;
inline constexpr int decoder_pair_width = relseq_classes + decoder_dist_bins.n_bins;

FeaturePair decoder_features(const std::vector<Vec3>& x_ca, const Tensor& z);
FeaturePair denoiser_features(const std::vector<Vec3>& x_ca, const Tensor& z);

}  // namespace plfm
