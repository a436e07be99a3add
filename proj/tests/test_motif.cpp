#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "plfm/metrics.hpp"
#include "plfm/motif.hpp"

using namespace plfm;

namespace {

// A reference "crystal" built from a toy helix: chain A with author numbering
// starting at the given offset.
ParsedChain toy_chain(char chain, int length, int first_resnum, uint64_t seed) {
  Rng rng(seed);
  ParsedChain pc;
  pc.chain = chain;
  pc.structure = make_toy_protein(length, rng);
  for (int i = 0; i < length; ++i) pc.resnum.push_back(first_resnum + i);
  return pc;
}

MotifTask demo_task(MotifDetail detail, MotifIndexing mode) {
  const ContigSpec spec = parse_contig("2-4/A10-13/1-3");
  return make_motif_task("demo", spec, 8, 11, detail, mode,
                         {toy_chain('A', 12, 5, 42)});  // residues A5..A16
}

}  // namespace

TEST_CASE("contig strings parse into the expected segments") {
  const ContigSpec spec = parse_contig("5-20/A1-20/10-25/B1-20/5-20");
  REQUIRE(spec.segments.size() == 5);
  CHECK(spec.segments[0].kind == ContigSegment::Kind::scaffold);
  CHECK(spec.segments[0].min_len == 5);
  CHECK(spec.segments[0].max_len == 20);
  CHECK(spec.segments[1].kind == ContigSegment::Kind::motif);
  CHECK(spec.segments[1].chain == 'A');
  CHECK(spec.segments[1].start == 1);
  CHECK(spec.segments[1].end == 20);
  CHECK(spec.segments[3].chain == 'B');
  CHECK(motif_segment_count(spec) == 2);
}

TEST_CASE("fixed-length scaffold tokens and adjacent motif runs") {
  const ContigSpec spec = parse_contig("A1-7/20/A28-79");
  REQUIRE(spec.segments.size() == 3);
  CHECK(spec.segments[0].motif_length() == 7);
  CHECK(spec.segments[1].kind == ContigSegment::Kind::scaffold);
  CHECK(spec.segments[1].min_len == 20);
  CHECK(spec.segments[1].max_len == 20);
  CHECK(spec.segments[2].motif_length() == 52);
  CHECK(motif_segment_count(spec) == 2);

  // Back-to-back motif ranges count as one contiguous segment.
  CHECK(motif_segment_count(parse_contig("5/A1-3/A4-6/5")) == 1);
}

TEST_CASE("contig rendering round-trips") {
  for (const char* text :
       {"5-20/A1-20/10-25/B1-20/5-20", "A1-7/20/A28-79", "10-40/F196-212/10-40", "15/A3-30"}) {
    const ContigSpec spec = parse_contig(text);
    CHECK(render_contig(spec) == text);
    CHECK(render_contig(parse_contig(render_contig(spec))) == text);
  }
}

TEST_CASE("contig parse failures carry token context") {
  CHECK_THROWS_WITH_AS(parse_contig(""), doctest::Contains("EmptySpec"), Error);
  CHECK_THROWS_WITH_AS(parse_contig("5-20//A1-3"), doctest::Contains("ParseError"), Error);
  CHECK_THROWS_WITH_AS(parse_contig("20-5"), doctest::Contains("ParseError"), Error);
  CHECK_THROWS_WITH_AS(parse_contig("A7-3"), doctest::Contains("ParseError"), Error);
  CHECK_THROWS_WITH_AS(parse_contig("a1-3"), doctest::Contains("ParseError"), Error);
  CHECK_THROWS_WITH_AS(parse_contig("5-x"), doctest::Contains("ParseError"), Error);
  CHECK_THROWS_WITH_AS(parse_contig("A1-3/5q"), doctest::Contains("ParseError"), Error);
}

TEST_CASE("placements respect per-segment and total bounds") {
  const ContigSpec spec = parse_contig("2-4/A10-13/1-3");
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Placement pl = sample_placement(spec, 8, 11, rng);
    CHECK(pl.total_length >= 8);
    CHECK(pl.total_length <= 11);
    REQUIRE(pl.scaffold_lengths.size() == 2);
    CHECK(pl.scaffold_lengths[0] >= 2);
    CHECK(pl.scaffold_lengths[0] <= 4);
    CHECK(pl.scaffold_lengths[1] >= 1);
    CHECK(pl.scaffold_lengths[1] <= 3);
    REQUIRE(pl.positions.size() == 4);
    for (int k = 0; k < 4; ++k) CHECK(pl.positions[size_t(k)] == pl.scaffold_lengths[0] + k);
    CHECK(pl.total_length == pl.scaffold_lengths[0] + 4 + pl.scaffold_lengths[1]);
  }
}

TEST_CASE("infeasible length windows are rejected up front") {
  const ContigSpec spec = parse_contig("2-4/A10-13/1-3");  // totals span 7..11
  Rng rng(4);
  CHECK_THROWS_WITH_AS(sample_placement(spec, 30, 40, rng), doctest::Contains("Infeasible"),
                       Error);
  CHECK_THROWS_WITH_AS(sample_placement(spec, 1, 5, rng), doctest::Contains("Infeasible"), Error);
}

TEST_CASE("motif tasks resolve author numbering against the reference") {
  const MotifTask task = demo_task(MotifDetail::all_atom, MotifIndexing::indexed);
  CHECK(task.motif_size() == 4);
  REQUIRE(task.motif_segments.size() == 1);
  // A10..A13 with numbering starting at 5 map to reference indices 5..8.
  Rng rng(42);
  const ProteinStructure ref = make_toy_protein(12, rng);
  for (int k = 0; k < 4; ++k) CHECK(task.motif_sequence()[size_t(k)] == ref.seq[size_t(5 + k)]);

  // Motif coordinates are centered on the motif CA centroid.
  Vec3 centroid{0, 0, 0};
  for (const Vec3& ca : task.motif_ca()) centroid = centroid + ca;
  CHECK(norm(centroid) < 1e-9);
}

TEST_CASE("missing reference residues are reported") {
  const ContigSpec spec = parse_contig("2-4/A90-93/1-3");
  CHECK_THROWS_WITH_AS(
      make_motif_task("bad", spec, 8, 11, MotifDetail::all_atom, MotifIndexing::indexed,
                      {toy_chain('A', 12, 5, 42)}),
      doctest::Contains("MissingResidue"), Error);
}

TEST_CASE("detail and indexing names round-trip") {
  CHECK(detail_from_string("all_atom") == MotifDetail::all_atom);
  CHECK(detail_from_string("tip_atom") == MotifDetail::tip_atom);
  CHECK(indexing_from_string("indexed") == MotifIndexing::indexed);
  CHECK(indexing_from_string("unindexed") == MotifIndexing::unindexed);
  CHECK_THROWS_WITH_AS(detail_from_string("side"), doctest::Contains("UnknownDetail"), Error);
  CHECK_THROWS_WITH_AS(indexing_from_string("none"), doctest::Contains("UnknownIndexing"),
                       Error);
}

TEST_CASE("indexed conditioning scatters motif rows to their positions") {
  const MotifTask task = demo_task(MotifDetail::all_atom, MotifIndexing::indexed);
  Rng rng(5);
  const Placement pl = sample_placement(task.spec, task.min_length, task.max_length, rng);
  const MotifConditioning cond = motif_features(task, pl);
  REQUIRE(cond.seq.shape == std::vector<int>{pl.total_length, all_atom_feature_width});

  for (int i = 0; i < pl.total_length; ++i) {
    double row_norm = 0;
    for (int c = 0; c < all_atom_feature_width; ++c)
      row_norm += std::fabs(cond.seq.v[size_t(i) * all_atom_feature_width + c]);
    const bool is_motif =
        std::find(pl.positions.begin(), pl.positions.end(), i) != pl.positions.end();
    CHECK((row_norm > 0) == is_motif);
  }
}

TEST_CASE("unindexed conditioning appends compact motif rows") {
  const MotifTask task = demo_task(MotifDetail::tip_atom, MotifIndexing::unindexed);
  Rng rng(6);
  const Placement pl = sample_placement(task.spec, task.min_length, task.max_length, rng);
  const MotifConditioning cond = motif_features(task, pl);
  REQUIRE(cond.seq.shape == std::vector<int>{task.motif_size(), tip_feature_width});

  // Each row carries its residue type one-hot after the 37 atom triples.
  const auto types = task.motif_sequence();
  for (int k = 0; k < task.motif_size(); ++k) {
    CHECK(cond.seq.v[size_t(k) * tip_feature_width + 3 * num_atom_slots + int(types[size_t(k)])] ==
          1.0);
    // Carbonyl C and O belong to no residue's tip set, so those triples stay
    // zero (N and CA do appear in a few tip sets, e.g. PRO and SER).
    double carbonyl = 0;
    for (int s : {slot_C, slot_O})
      for (int c = 0; c < 3; ++c)
        carbonyl += std::fabs(cond.seq.v[size_t(k) * tip_feature_width + 3 * s + c]);
    CHECK(carbonyl == 0.0);
  }
}

TEST_CASE("pair features gain a sentinel class for appended rows") {
  std::vector<Vec3> x(3);
  x[0] = {0, 0, 0};
  x[1] = {3.8, 0, 0};
  x[2] = {7.6, 0, 0};
  const Tensor pair = conditioned_pair_features(x, 2);
  const int R = 5;
  REQUIRE(pair.shape == std::vector<int>{R * R, conditioned_pair_width});

  // Real-real pair: ordinary relseq plus one distance bin.
  const double* real_row = &pair.v[(size_t(0) * R + 1) * conditioned_pair_width];
  CHECK(real_row[relseq_class(0, 1)] == 1.0);
  double dist_real = 0;
  for (int b = 0; b < decoder_dist_bins.n_bins; ++b)
    dist_real += real_row[relseq_classes + 1 + b];
  CHECK(dist_real == 1.0);

  // Any pair touching an appended row: sentinel hot, distances zero.
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) {
      if (i < 3 && j < 3) continue;
      const double* row = &pair.v[(size_t(i) * R + j) * conditioned_pair_width];
      CHECK(row[relseq_classes] == 1.0);  // sentinel sits after the 131 classes
      double rest = 0;
      for (int c = 0; c < conditioned_pair_width; ++c)
        if (c != relseq_classes) rest += std::fabs(row[c]);
      CHECK(rest == 0.0);
    }
}

TEST_CASE("greedy matching assigns nearest unclaimed positions in order") {
  const std::vector<Vec3> generated{{0, 0, 0}, {5, 0, 0}, {10, 0, 0}, {15, 0, 0}};
  SUBCASE("plain nearest") {
    const std::vector<Vec3> gt{{10.2, 0, 0}, {-0.3, 0, 0}};
    CHECK(greedy_match(gt, generated) == std::vector<int>{2, 0});
  }
  SUBCASE("earlier residue claims the shared nearest, later takes next best") {
    const std::vector<Vec3> gt{{5.1, 0, 0}, {5.2, 0, 0}};
    CHECK(greedy_match(gt, generated) == std::vector<int>{1, 2});
  }
  SUBCASE("exact ties resolve to the lowest index") {
    const std::vector<Vec3> gt{{7.5, 0, 0}};  // equidistant from 5 and 10
    CHECK(greedy_match(gt, generated) == std::vector<int>{1});
  }
  CHECK_THROWS_WITH_AS(greedy_match(std::vector<Vec3>(5), std::vector<Vec3>(4)),
                       doctest::Contains("SizeMismatch"), Error);
}

// The closed-loop property: embedding the motif verbatim and refolding with
// an identity oracle must pass every criterion with zero error.
TEST_CASE("verbatim embedding evaluates to a perfect scaffold") {
  const MotifTask task = demo_task(MotifDetail::all_atom, MotifIndexing::indexed);
  Rng rng(7);
  const Placement pl = sample_placement(task.spec, task.min_length, task.max_length, rng);

  ProteinStructure gen = ProteinStructure::empty(pl.total_length);
  for (int i = 0; i < gen.length(); ++i) {
    gen.seq[size_t(i)] = ResidueType::GLY;
    gen.set_atom(i, slot_CA, Vec3{3.8 * i, 50.0, 0.0});
  }
  const ProteinStructure& seg = task.motif_segments[0];
  for (int k = 0; k < seg.length(); ++k) {
    const int pos = pl.positions[size_t(k)];
    gen.seq[size_t(pos)] = seg.seq[size_t(k)];
    for (int s = 0; s < num_atom_slots; ++s) {
      gen.mask[size_t(pos) * num_atom_slots + s] = 0;
      gen.xyz[size_t(pos) * num_atom_slots + s] = Vec3{0, 0, 0};
      if (seg.has_atom(k, s)) gen.set_atom(pos, s, seg.atom(k, s));
    }
  }

  SUBCASE("indexed evaluation") {
    const ScaffoldReport rep = evaluate_scaffold(task, gen, gen, &pl.positions);
    CHECK(rep.success());
    CHECK(rep.ca_rmsd < 1e-9);
    CHECK(rep.scope_rmsd < 1e-9);
    CHECK(rep.sc_rmsd < 1e-9);
  }
  SUBCASE("unindexed evaluation recovers the placement by matching") {
    const ScaffoldReport rep = evaluate_scaffold(task, gen, gen, nullptr);
    CHECK(rep.positions == pl.positions);
    CHECK(rep.success());
  }
  SUBCASE("mutating one motif residue fails sequence recovery only") {
    ProteinStructure mutated = gen;
    const int pos = pl.positions[0];
    const ResidueType swapped =
        mutated.seq[size_t(pos)] == ResidueType::GLY ? ResidueType::ALA : ResidueType::GLY;
    // GLY's atom set is a subset of every type's, so stripping down to it
    // keeps the structure valid in both swap directions.
    for (int s = 0; s < num_atom_slots; ++s)
      if (mutated.has_atom(pos, s) && !residue_has_atom(ResidueType::GLY, s)) {
        mutated.mask[size_t(pos) * num_atom_slots + s] = 0;
        mutated.xyz[size_t(pos) * num_atom_slots + s] = Vec3{0, 0, 0};
      }
    mutated.seq[size_t(pos)] = swapped;
    const ScaffoldReport rep = evaluate_scaffold(task, mutated, mutated, &pl.positions);
    CHECK_FALSE(rep.seq_recovered);
    CHECK(rep.ca_ok);
    CHECK_FALSE(rep.success());
  }
  SUBCASE("displacing motif CAs fails the backbone criterion") {
    ProteinStructure moved = gen;
    // Zero-mean displacement of CA slots only, large enough that the best
    // rigid fit cannot pull the RMSD back under threshold.
    const Vec3 d{4.0, 0, 0};
    moved.atom(pl.positions[0], slot_CA) = moved.atom(pl.positions[0], slot_CA) + d;
    moved.atom(pl.positions[1], slot_CA) = moved.atom(pl.positions[1], slot_CA) - d;
    const ScaffoldReport rep = evaluate_scaffold(task, moved, moved, &pl.positions);
    CHECK_FALSE(rep.ca_ok);
  }
  SUBCASE("displacing non-CA atoms fails the atom-scope criterion") {
    ProteinStructure moved = gen;
    for (int k = 0; k < seg.length(); ++k) {
      const int pos = pl.positions[size_t(k)];
      for (int s = 0; s < num_atom_slots; ++s) {
        if (!moved.has_atom(pos, s) || s == slot_CA) continue;
        moved.atom(pos, s) = moved.atom(pos, s) + Vec3{0, 0, 10.0};
      }
    }
    const ScaffoldReport rep = evaluate_scaffold(task, moved, moved, &pl.positions);
    CHECK(rep.ca_ok);  // CA superposition anchors are untouched
    CHECK_FALSE(rep.scope_ok);
  }
  SUBCASE("a drifting refold fails codesignability") {
    ProteinStructure refolded = gen;
    // Non-rigid stretch: push each residue further than the last.
    for (int i = 0; i < refolded.length(); ++i)
      for (int s = 0; s < num_atom_slots; ++s)
        if (refolded.has_atom(i, s))
          refolded.atom(i, s) = refolded.atom(i, s) + Vec3{0, 0, 2.0 * i};
    const ScaffoldReport rep = evaluate_scaffold(task, gen, refolded, &pl.positions);
    CHECK_FALSE(rep.codesignable);
    CHECK(rep.ca_ok);
  }
}

TEST_CASE("tip-atom scope ignores backbone-only deviations") {
  const MotifTask task = demo_task(MotifDetail::tip_atom, MotifIndexing::indexed);
  Rng rng(8);
  const Placement pl = sample_placement(task.spec, task.min_length, task.max_length, rng);

  ProteinStructure gen = ProteinStructure::empty(pl.total_length);
  for (int i = 0; i < gen.length(); ++i) {
    gen.seq[size_t(i)] = ResidueType::GLY;
    gen.set_atom(i, slot_CA, Vec3{3.8 * i, 50.0, 0.0});
  }
  const ProteinStructure& seg = task.motif_segments[0];
  for (int k = 0; k < seg.length(); ++k) {
    const int pos = pl.positions[size_t(k)];
    gen.seq[size_t(pos)] = seg.seq[size_t(k)];
    for (int s = 0; s < num_atom_slots; ++s) {
      gen.mask[size_t(pos) * num_atom_slots + s] = 0;
      gen.xyz[size_t(pos) * num_atom_slots + s] = Vec3{0, 0, 0};
      if (seg.has_atom(k, s)) gen.set_atom(pos, s, seg.atom(k, s));
    }
  }

  // Perturb carbonyl C and O of the motif; they are outside every tip scope
  // (N is not: PRO's tip set includes its backbone nitrogen).
  ProteinStructure bent = gen;
  for (int k = 0; k < seg.length(); ++k) {
    const int pos = pl.positions[size_t(k)];
    for (int s : {slot_C, slot_O})
      if (bent.has_atom(pos, s)) bent.atom(pos, s) = bent.atom(pos, s) + Vec3{0, 0, 8.0};
  }
  const ScaffoldReport tip_rep = evaluate_scaffold(task, bent, bent, &pl.positions);
  CHECK(tip_rep.scope_ok);

  // The same structure under all-atom detail fails the scope check.
  const MotifTask all_task = demo_task(MotifDetail::all_atom, MotifIndexing::indexed);
  const ScaffoldReport all_rep = evaluate_scaffold(all_task, bent, bent, &pl.positions);
  CHECK_FALSE(all_rep.scope_ok);
}
