#pragma once

// All-atom protein representation on the fixed 37-slot heavy-atom layout,
// PDB text I/O, and a deterministic toy-helix generator used as training
// data by the desk-scale pipelines.

#include <optional>
#include <string>
#include <vector>

#include "plfm/common.hpp"

namespace plfm {

// Canonical order "ARNDCQEGHILKMFPSTWYV".
enum class ResidueType : int {
  ALA, ARG, ASN, ASP, CYS, GLN, GLU, GLY, HIS, ILE,
  LEU, LYS, MET, PHE, PRO, SER, THR, TRP, TYR, VAL,
};

inline constexpr int num_residue_types = 20;
inline constexpr int num_atom_slots = 37;

// Slot layout shared by every residue type. Index 0..36; CA is slot 1.
// Hydrogens are not represented; OXT exists as a slot name in files but is
// not part of any residue's canonical atom set here.
extern const char* const atom37_names[num_atom_slots];
inline constexpr int slot_N = 0;
inline constexpr int slot_CA = 1;
inline constexpr int slot_C = 2;
inline constexpr int slot_CB = 3;
inline constexpr int slot_O = 4;

// -1 when a name is not one of the 37 slots.
int atom37_index(const std::string& name);

ResidueType residue_from_three(const std::string& code);  // throws UnknownResidue
ResidueType residue_from_one(char c);                     // throws UnknownResidue
const char* residue_three(ResidueType t);
char residue_one(ResidueType t);

// Canonical heavy-atom slots for a residue type, in slot order.
const std::vector<int>& residue_atoms(ResidueType t);
int residue_atom_count(ResidueType t);
bool residue_has_atom(ResidueType t, int slot);

// Side-chain torsion definitions: up to four atom-slot quadruples per type.
// GLY and ALA define none; PRO defines chi1 and chi2.
struct ChiDefinition {
  int n_chi;
  int atoms[4][4];  // [chi index][four slots]
};
const ChiDefinition& chi_definition(ResidueType t);

// Motif tip-atom scope: the functionally relevant atom subset per type.
// GLY's set is empty, so GLY residues cannot participate in tip-atom motifs.
const std::vector<int>& tip_atoms(ResidueType t);

// Intra-residue covalent bonds as slot pairs (includes ring-closure bonds,
// e.g. PRO CD-N). The peptide bond C(i)-N(i+1) is added by callers that walk
// a chain.
const std::vector<std::pair<int, int>>& residue_bonds(ResidueType t);

// Element number of a slot is not needed; clash checks use vdW radii only.
// Radii: C 1.70, N 1.55, O 1.52, S 1.80 (angstrom).
double slot_vdw_radius(int slot);

struct ProteinStructure {
  std::vector<ResidueType> seq;   // length L
  std::vector<Vec3> xyz;          // L*37, masked-out entries exactly zero
  std::vector<uint8_t> mask;      // L*37, 1 where the atom exists
  std::vector<double> b_factor;   // per residue, doubles as a pLDDT field

  int length() const { return int(seq.size()); }

  Vec3& atom(int res, int slot) { return xyz[size_t(res) * num_atom_slots + slot]; }
  const Vec3& atom(int res, int slot) const { return xyz[size_t(res) * num_atom_slots + slot]; }
  bool has_atom(int res, int slot) const { return mask[size_t(res) * num_atom_slots + slot] != 0; }
  void set_atom(int res, int slot, const Vec3& p) {
    xyz[size_t(res) * num_atom_slots + slot] = p;
    mask[size_t(res) * num_atom_slots + slot] = 1;
  }

  std::string sequence_one_letter() const;

  static ProteinStructure empty(int length);
};

// Structural well-formedness: every residue has a CA, mask is a subset of
// the canonical atom set for its type, masked-out coordinates are exactly
// zero, all values finite. Throws Error("InvalidStructure") on violation.
void validate(const ProteinStructure& p);

// True when the mask equals the full canonical atom set for every residue
// (what make_toy_protein and the decoder produce; parsed files may be
// partial).
bool is_complete(const ProteinStructure& p);

// Shift so the CA centroid sits at the origin; masked-out entries stay zero.
ProteinStructure centered(const ProteinStructure& p);

// Fixed-column PDB text.
//
// parse_pdb reads ATOM records of the first chain encountered, ignores
// hydrogens / OXT / unknown atom names and non-'A' altLocs, takes the CA
// temperature factor as the per-residue b_factor (100.0 when blank).
// Errors: UnknownResidue, MissingCA, MalformedRecord.
ProteinStructure parse_pdb(const std::string& text);
ProteinStructure parse_pdb_file(const std::string& path);

// All chains with their author residue numbering (needed to resolve motif
// ranges like A28-79). A TER record closes its chain; ENDMDL/END stop the
// read, so only the first model of multi-model files is seen.
struct ParsedChain {
  char chain = 'A';
  ProteinStructure structure;
  std::vector<int> resnum;  // author numbering, aligned with residues
};
std::vector<ParsedChain> parse_pdb_all_chains(const std::string& text);

// write_pdb emits masked atoms only, 3-decimal coordinates, chain A,
// occupancy 1.00, per-residue b_factor, TER + END. Round-trips exactly at
// 3-decimal precision.
std::string write_pdb(const ProteinStructure& p);
void write_pdb_file(const ProteinStructure& p, const std::string& path);

struct ToyProteinConfig {
  double phi_deg = -57.0;   // interior backbone torsions of an ideal helix
  double psi_deg = -47.0;
  double chi_noise_rad = 0.06;  // jitter around the staggered rotamer targets
  double b_factor = 100.0;
  // When set, every chi target takes this value instead of a random staggered
  // pick (noise still applies); handy for rotamer-recovery checks.
  std::optional<double> fixed_chi_deg;
};

// Deterministic ideal-geometry alpha helix with a uniformly random sequence
// and side chains at randomly selected staggered rotamers
// (chi in {-60, 60, 180} degrees plus noise). Length must be in [4, 64].
ProteinStructure make_toy_protein(int length, Rng& rng, const ToyProteinConfig& cfg = {});

}  // namespace plfm
