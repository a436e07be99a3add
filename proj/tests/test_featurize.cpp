#include <cmath>

#include "doctest.h"
#include "plfm/featurize.hpp"

using namespace plfm;

TEST_CASE("linear bins clamp at both ends and split evenly") {
  const BinSpec spec{1.0, 21.0, 20, false};  // width 1 per bin
  CHECK(bin_index(0.0, spec) == 0);
  CHECK(bin_index(1.0, spec) == 0);
  CHECK(bin_index(1.999, spec) == 0);
  CHECK(bin_index(2.0, spec) == 1);
  CHECK(bin_index(20.999, spec) == 19);
  CHECK(bin_index(21.0, spec) == 19);
  CHECK(bin_index(500.0, spec) == 19);
}

TEST_CASE("circular bins wrap instead of clamping") {
  CHECK(bin_index(M_PI + 0.1, angle_bins) == bin_index(-M_PI + 0.1, angle_bins));
  CHECK(bin_index(3.0 + 2 * M_PI, angle_bins) == bin_index(3.0, angle_bins));
  CHECK(bin_index(-3.0 - 4 * M_PI, angle_bins) == bin_index(-3.0, angle_bins));
}

TEST_CASE("binning rejects NaN") {
  CHECK_THROWS_WITH_AS(bin_index(std::nan(""), angle_bins), doctest::Contains("InvalidArgument"),
                       Error);
}

TEST_CASE("bin_onehot writes exactly one hot entry") {
  double out[20];
  bin_onehot(0.3, angle_bins, out);
  int hot = 0;
  for (double v : out) hot += v == 1.0 ? 1 : 0;
  CHECK(hot == 1);
}

TEST_CASE("relative sequence classes saturate at 64 and mirror") {
  CHECK(relseq_class(0, 0) == 65);
  CHECK(relseq_class(0, 1) == 66);
  CHECK(relseq_class(1, 0) == 64);
  CHECK(relseq_class(0, 64) == 129);
  CHECK(relseq_class(0, 65) == 130);
  CHECK(relseq_class(0, 400) == 130);
  CHECK(relseq_class(65, 0) == 0);
  CHECK(relseq_class(400, 0) == 0);
  for (int d = -70; d <= 70; ++d)
    CHECK(relseq_class(0, d) + relseq_class(d, 0) == relseq_classes - 1);
}

TEST_CASE("encoder features have the documented layout") {
  Rng rng(21);
  const ProteinStructure p = centered(make_toy_protein(8, rng));
  const FeaturePair f = encoder_features(p);
  REQUIRE(f.seq.shape == std::vector<int>{8, encoder_seq_width});
  REQUIRE(f.pair.shape == std::vector<int>{64, encoder_pair_width});

  const int i = 3;
  const double* row = &f.seq.v[size_t(i) * encoder_seq_width];
  // Raw coordinates block, then CA-relative block.
  const Vec3 ca = p.atom(i, slot_CA);
  CHECK(row[3 * slot_CA + 0] == ca[0]);
  CHECK(row[111 + 3 * slot_CA + 0] == 0.0);
  CHECK(row[111 + 3 * slot_N + 0] == p.atom(i, slot_N)[0] - ca[0]);
  // Residue one-hot.
  CHECK(row[222 + int(p.seq[i])] == 1.0);
  double type_sum = 0;
  for (int t = 0; t < 20; ++t) type_sum += row[222 + t];
  CHECK(type_sum == 1.0);
  // Backbone torsion blocks: interior residue has all three.
  double tor_sum = 0;
  for (int k = 0; k < 60; ++k) tor_sum += row[322 + k];
  CHECK(tor_sum == 3.0);
  // First residue lacks phi and omega.
  double first_sum = 0;
  for (int k = 0; k < 60; ++k) first_sum += f.seq.v[322 + k];
  CHECK(first_sum == 1.0);
}

TEST_CASE("missing atoms leave zero coordinate blocks") {
  Rng rng(22);
  ProteinStructure p = centered(make_toy_protein(8, rng));
  p.mask[size_t(2) * num_atom_slots + slot_O] = 0;
  p.xyz[size_t(2) * num_atom_slots + slot_O] = Vec3{0, 0, 0};
  const FeaturePair f = encoder_features(p);
  const double* row = &f.seq.v[size_t(2) * encoder_seq_width];
  for (int k = 0; k < 3; ++k) {
    CHECK(row[3 * slot_O + k] == 0.0);
    CHECK(row[111 + 3 * slot_O + k] == 0.0);
  }
}

TEST_CASE("encoder pair rows carry relseq, orientations and distances") {
  Rng rng(23);
  const ProteinStructure p = centered(make_toy_protein(6, rng));
  const FeaturePair f = encoder_features(p);
  const int L = 6, i = 1, j = 4;
  const double* row = &f.pair.v[(size_t(i) * L + j) * encoder_pair_width];
  CHECK(row[relseq_class(i, j)] == 1.0);
  double orient = 0, dist = 0;
  for (int k = 0; k < 60; ++k) orient += row[relseq_classes + k];
  for (int k = 0; k < 80; ++k) dist += row[relseq_classes + 60 + k];
  CHECK(orient == 3.0);
  CHECK(dist == 4.0);
  // Diagonal rows have only the relseq hot.
  const double* diag = &f.pair.v[(size_t(i) * L + i) * encoder_pair_width];
  double total = 0;
  for (int k = 0; k < encoder_pair_width; ++k) total += diag[k];
  CHECK(total == 1.0);
}

TEST_CASE("decoder features concatenate coordinates and latents") {
  const int L = 4;
  std::vector<Vec3> x(L);
  for (int i = 0; i < L; ++i) x[size_t(i)] = Vec3{double(i), 0.5, -0.5};
  Tensor z = Tensor::zeros({L, latent_dim});
  for (size_t k = 0; k < z.size(); ++k) z.v[k] = 0.01 * double(k);

  const FeaturePair f = decoder_features(x, z);
  REQUIRE(f.seq.shape == std::vector<int>{L, decoder_seq_width});
  REQUIRE(f.pair.shape == std::vector<int>{L * L, decoder_pair_width});
  CHECK(f.seq.v[0] == 0.0);
  CHECK(f.seq.v[size_t(2) * decoder_seq_width + 0] == 2.0);
  CHECK(f.seq.v[size_t(1) * decoder_seq_width + 3] == z.v[size_t(1) * latent_dim]);

  // Pair row for (0, 3): distance 3 falls in the third decoder bin.
  const double* row = &f.pair.v[(size_t(0) * L + 3) * decoder_pair_width];
  CHECK(row[relseq_class(0, 3)] == 1.0);
  CHECK(row[relseq_classes + bin_index(3.0, decoder_dist_bins)] == 1.0);
}

TEST_CASE("decoder features validate latent shape") {
  std::vector<Vec3> x(4);
  CHECK_THROWS_WITH_AS(decoder_features(x, Tensor::zeros({4, 7})),
                       doctest::Contains("ShapeMismatch"), Error);
  CHECK_THROWS_WITH_AS(decoder_features(x, Tensor::zeros({5, latent_dim})),
                       doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("denoiser features share the decoder recipe") {
  std::vector<Vec3> x(3, Vec3{1, 2, 3});
  x[1] = {4, 5, 6};
  x[2] = {-1, 0, 2};
  Tensor z = Tensor::zeros({3, latent_dim});
  z.v[5] = 0.7;
  const FeaturePair a = decoder_features(x, z);
  const FeaturePair b = denoiser_features(x, z);
  CHECK(a.seq.v == b.seq.v);
  CHECK(a.pair.v == b.pair.v);
}
