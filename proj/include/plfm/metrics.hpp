#pragma once

// Evaluation surface: co-designability gate behind a pluggable fold oracle,
// a vdW-overlap clash score (proxy for dot-based contact analysis), circular
// chi-angle histograms with a rotamer-outlier fraction, and a generic
// single-linkage cluster counter.

#include <functional>
#include <string>
#include <vector>

#include "plfm/protein.hpp"

namespace plfm {

// sequence -> predicted structure (length must match). Implementations
// declare their own thread-safety; everything here calls them serially.
class FoldOracle {
 public:
  virtual ~FoldOracle() = default;
  virtual ProteinStructure fold(const std::string& sequence) = 0;
};

// Returns a fixed structure regardless of sequence; the degenerate oracle
// for closed-loop tests and replay pipelines.
class IdentityOracle : public FoldOracle {
 public:
  explicit IdentityOracle(ProteinStructure s) : structure_(std::move(s)) {}
  ProteinStructure fold(const std::string&) override { return structure_; }

 private:
  ProteinStructure structure_;
};

// Shells out to `command <sequence>` and parses PDB text from its stdout.
class CommandOracle : public FoldOracle {
 public:
  explicit CommandOracle(std::string command) : command_(std::move(command)) {}
  ProteinStructure fold(const std::string& sequence) override; // OracleFailure

 private:
  std::string command_;
};

// RMSD over atoms present in both structures after Kabsch superposition.
// Lengths must match (LengthMismatch); needs >= 3 shared atoms.
double all_atom_scrmsd(const ProteinStructure& a, const ProteinStructure& b);

struct CodesignReport {
  bool codesignable = false; // scrmsd < 2.0, strict
  double scrmsd = 0;
  ProteinStructure refolded;
};

CodesignReport codesignability(const ProteinStructure& generated, FoldOracle& oracle);

// Unordered heavy-atom pairs whose vdW shells interpenetrate by >= 0.4 A,
// per 1000 atoms. Pairs within bond-graph distance <= 3 are excluded, with
// the graph spanning residue topology plus peptide C-N links; counting 1-4
// pairs would flag the para contacts of every ideal aromatic ring.
double clash_score(const ProteinStructure& p);

// Circular histogram over (-pi, pi], normalized to sum 1.
struct ChiHistogram {
  int n_bins = 0;
  std::vector<double> mass;
  double bin_center(int b) const;
};

constexpr int default_chi_bins = 72; // 5-degree bins

// Histogram of one (residue type, chi index) over a corpus; residues lacking
// the angle are skipped. EmptySelection when nothing qualifies.
ChiHistogram chi_distribution(const std::vector<ProteinStructure>& corpus, ResidueType type,
                              int chi_index, int n_bins = default_chi_bins);

// Reference densities for every (type, chi) pair with data in the corpus.
struct RotamerDensity {
  int n_bins = default_chi_bins;
  ChiHistogram hist[num_residue_types][4];
  bool has[num_residue_types][4] = {};
};

RotamerDensity build_rotamer_density(const std::vector<ProteinStructure>& corpus,
                                     int n_bins = default_chi_bins);

// A residue is an outlier when any defined chi falls in a reference bin with
// mass below threshold; returns the fraction over side-chain-bearing
// residues (0 when there are none). MissingReference when the corpus has a
// (type, chi) the reference lacks.
double rotamer_outlier_fraction(const std::vector<ProteinStructure>& corpus,
                                const RotamerDensity& reference, double threshold = 0.003);

// Connected components under similarity(i, j) >= threshold (single linkage);
// similarity must be symmetric.
int cluster_count(int n_items, const std::function<double(int, int)>& similarity,
                  double threshold);

}  // namespace plfm
