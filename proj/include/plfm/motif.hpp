#pragma once

// Motif scaffolding: contig-string grammar, scaffold placement sampling,
// conditioning feature blocks for the four regimes (all-atom / tip-atom x
// indexed / unindexed), greedy CA matching, and the four-criterion success
// evaluation against a refolded structure.

#include <string>
#include <vector>

#include "plfm/featurize.hpp"
#include "plfm/protein.hpp"

namespace plfm {

struct ContigSegment {
  enum class Kind { scaffold, motif };
  Kind kind = Kind::scaffold;
  int min_len = 0, max_len = 0; // scaffold: sampled length range
  char chain = 'A';             // motif: source chain
  int start = 0, end = 0;       // motif: inclusive residue-number range
  int motif_length() const { return end - start + 1; }
};

struct ContigSpec {
  std::vector<ContigSegment> segments;
};

// Grammar: '/'-separated tokens; "a-b" scaffold range, "a" exact scaffold,
// "<Chain><a>-<b>" or "<Chain><a>" motif range. ParseError names the token
// position; EmptySpec for no tokens.
ContigSpec parse_contig(const std::string& text);
std::string render_contig(const ContigSpec& spec); // exact ranges render as "a"

// Count of maximal contiguous motif runs (the "# segments" grouping).
int motif_segment_count(const ContigSpec& spec);

struct Placement {
  int total_length = 0;
  std::vector<int> positions;        // generated index per motif residue, in order
  std::vector<int> scaffold_lengths; // sampled length per scaffold segment, in order
};

// Uniform per-segment lengths, rejection-sampled until the total lands in
// [min_total, max_total]; Infeasible when no assignment can.
Placement sample_placement(const ContigSpec& spec, int min_total, int max_total, Rng& rng);

enum class MotifDetail { all_atom, tip_atom };
enum class MotifIndexing { indexed, unindexed };

MotifDetail detail_from_string(const std::string& s);     // UnknownDetail
MotifIndexing indexing_from_string(const std::string& s); // UnknownIndexing
std::string to_string(MotifDetail d);
std::string to_string(MotifIndexing m);

// Motif references come in as parsed chains with author numbering.
using ReferenceChain = ParsedChain;

struct MotifTask {
  std::string name;
  ContigSpec spec;
  int min_length = 1, max_length = 1;
  MotifDetail detail = MotifDetail::all_atom;
  MotifIndexing mode = MotifIndexing::indexed;
  // Extracted motif residues, one structure per motif segment in contig
  // order, jointly centered at the motif CA centroid.
  std::vector<ProteinStructure> motif_segments;

  int motif_size() const;
  std::vector<ResidueType> motif_sequence() const;
  std::vector<Vec3> motif_ca() const;
};

// Resolves every motif range against the reference chains; MissingResidue
// when a numbered residue is absent.
MotifTask make_motif_task(const std::string& name, const ContigSpec& spec, int min_length,
                          int max_length, MotifDetail detail, MotifIndexing mode,
                          const std::vector<ReferenceChain>& chains);

// Widths of one conditioning row: all-atom rows reuse the encoder feature
// recipe (coordinates, CA-relative coordinates, residue type, chi bins,
// backbone-torsion bins); tip rows carry tip-atom coordinates plus type.
constexpr int all_atom_feature_width = encoder_seq_width;
constexpr int tip_feature_width = 3 * num_atom_slots + num_residue_types;

struct MotifConditioning {
  MotifDetail detail = MotifDetail::all_atom;
  MotifIndexing mode = MotifIndexing::indexed;
  // indexed: [L, width] with nonzero rows only at motif positions;
  // unindexed: [motif_size, width] to append below the L state rows.
  Tensor seq;
};

MotifConditioning motif_features(const MotifTask& task, const Placement& placement);

// Pair features for a denoiser over L state rows plus extra appended rows:
// the relative-sequence one-hot gains a sentinel class for any pair that
// touches an appended row, and distance bins are zero there.
constexpr int conditioned_pair_width = (relseq_classes + 1) + decoder_dist_bins.n_bins;
Tensor conditioned_pair_features(const std::vector<Vec3>& x_ca, int extra_rows);

// Each ground-truth CA claims its nearest unclaimed generated CA, in order.
std::vector<int> greedy_match(const std::vector<Vec3>& gt_ca,
                              const std::vector<Vec3>& generated_ca);

struct ScaffoldReport {
  std::vector<int> positions; // motif residue -> generated index used
  bool seq_recovered = false; // every motif residue type matches
  bool ca_ok = false;         // motif CA RMSD < 1 A after motif-CA superposition
  bool scope_ok = false;      // motif all-atom RMSD < 2 A over the detail scope
  bool codesignable = false;  // all-atom scRMSD vs refolded < 2 A
  double ca_rmsd = 0;
  double scope_rmsd = 0;
  double sc_rmsd = 0;
  bool success() const { return seq_recovered && ca_ok && scope_ok && codesignable; }
};

// positions == nullptr resolves motif indices by greedy CA matching
// (unindexed semantics); otherwise uses the given placement. The atom scope
// is the intersection of atoms present in reference and generated; an empty
// tip scope passes vacuously (nothing was scaffolded).
ScaffoldReport evaluate_scaffold(const MotifTask& task, const ProteinStructure& generated,
                                 const ProteinStructure& refolded,
                                 const std::vector<int>* positions = nullptr);

}  // namespace plfm
