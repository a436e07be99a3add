#include <cmath>
#include <set>

#include "doctest.h"
#include "plfm/geometry.hpp"
#include "plfm/protein.hpp"

using namespace plfm;

TEST_CASE("residue tables are internally consistent") {
  for (int t = 0; t < num_residue_types; ++t) {
    const auto rt = ResidueType(t);
    int n = 0;
    for (int s = 0; s < num_atom_slots; ++s) n += residue_has_atom(rt, s) ? 1 : 0;
    CHECK(n == residue_atom_count(rt));
    CHECK(residue_has_atom(rt, slot_CA));
    // Every chi quadruple references atoms the residue actually has.
    const ChiDefinition& chi = chi_definition(rt);
    for (int k = 0; k < chi.n_chi; ++k)
      for (int a = 0; a < 4; ++a) CHECK(residue_has_atom(rt, chi.atoms[k][a]));
    // Tip atoms are a subset of the residue's atoms.
    for (int s : tip_atoms(rt)) CHECK(residue_has_atom(rt, s));
  }
  CHECK(residue_atom_count(ResidueType::GLY) == 4);
  CHECK(residue_atom_count(ResidueType::TRP) == 14);
  CHECK(tip_atoms(ResidueType::GLY).empty());
}

TEST_CASE("one and three letter codes round-trip") {
  for (int t = 0; t < num_residue_types; ++t) {
    const auto rt = ResidueType(t);
    CHECK(residue_from_one(residue_one(rt)) == rt);
    CHECK(residue_from_three(residue_three(rt)) == rt);
  }
  CHECK_THROWS_WITH_AS(residue_from_three("XYZ"), doctest::Contains("UnknownResidue"), Error);
}

TEST_CASE("toy proteins are complete valid helices") {
  Rng rng(5);
  const ProteinStructure p = make_toy_protein(24, rng);
  validate(p);
  CHECK(is_complete(p));
  CHECK(p.length() == 24);

  // Consecutive CA distance of an ideal alpha helix.
  for (int i = 0; i + 1 < p.length(); ++i)
    CHECK(norm(p.atom(i + 1, slot_CA) - p.atom(i, slot_CA)) == doctest::Approx(3.8).epsilon(0.05));

  // Interior backbone torsions sit at the requested helix values.
  const auto torsions = backbone_torsions(p);
  for (int i = 1; i + 1 < p.length(); ++i) {
    CHECK(torsions[i].phi * 180.0 / M_PI == doctest::Approx(-57.0).epsilon(0.01));
    CHECK(torsions[i].psi * 180.0 / M_PI == doctest::Approx(-47.0).epsilon(0.01));
  }
}

TEST_CASE("toy protein generation is deterministic in the seed") {
  Rng a(9), b(9), c(10);
  const ProteinStructure pa = make_toy_protein(10, a);
  const ProteinStructure pb = make_toy_protein(10, b);
  const ProteinStructure pc = make_toy_protein(10, c);
  CHECK(pa.xyz == pb.xyz);
  CHECK(pa.seq == pb.seq);
  CHECK(pa.xyz != pc.xyz);
}

TEST_CASE("toy protein length limits") {
  Rng rng(1);
  CHECK_THROWS_WITH_AS(make_toy_protein(3, rng), doctest::Contains("InvalidLength"), Error);
  CHECK_THROWS_WITH_AS(make_toy_protein(65, rng), doctest::Contains("InvalidLength"), Error);
}

TEST_CASE("fixed chi pins every rotamer") {
  Rng rng(3);
  ToyProteinConfig cfg;
  cfg.fixed_chi_deg = 180.0;
  cfg.chi_noise_rad = 0.0;
  const ProteinStructure p = make_toy_protein(32, rng, cfg);
  const auto chis = chi_angles(p);
  for (int i = 0; i < p.length(); ++i)
    for (int k = 0; k < 4; ++k)
      if (chis[size_t(i)].defined[k])
        CHECK(std::fabs(std::fabs(chis[size_t(i)].chi[k]) - M_PI) < 1e-6);
}

TEST_CASE("pdb text round-trips at three decimals") {
  Rng rng(7);
  const ProteinStructure p = make_toy_protein(12, rng);
  const ProteinStructure q = parse_pdb(write_pdb(p));
  REQUIRE(q.length() == p.length());
  CHECK(q.seq == p.seq);
  CHECK(q.mask == p.mask);
  for (size_t i = 0; i < p.xyz.size(); ++i)
    for (int k = 0; k < 3; ++k) CHECK(std::fabs(q.xyz[i][k] - p.xyz[i][k]) <= 5e-4);
  CHECK(parse_pdb(write_pdb(q)).xyz == q.xyz);  // second pass is exact
}

TEST_CASE("parser skips hydrogens, OXT and alternate locations") {
  const std::string text =
      "ATOM      1  N   ALA A   1       1.000   0.000   0.000  1.00 90.00           N\n"
      "ATOM      2  CA AALA A   1       2.000   0.000   0.000  0.50 80.00           C\n"
      "ATOM      3  CA BALA A   1       9.000   9.000   9.000  0.50 80.00           C\n"
      "ATOM      4  C   ALA A   1       3.000   0.000   0.000  1.00 90.00           C\n"
      "ATOM      5  O   ALA A   1       4.000   0.000   0.000  1.00 90.00           O\n"
      "ATOM      6  CB  ALA A   1       5.000   0.000   0.000  1.00 90.00           C\n"
      "ATOM      7  OXT ALA A   1       6.000   0.000   0.000  1.00 90.00           O\n"
      "ATOM      8  H   ALA A   1       7.000   0.000   0.000  1.00 90.00           H\n"
      "END\n";
  const ProteinStructure p = parse_pdb(text);
  REQUIRE(p.length() == 1);
  CHECK(p.seq[0] == ResidueType::ALA);
  CHECK(p.atom(0, slot_CA)[0] == 2.000);  // altLoc A wins, B ignored
  CHECK(p.b_factor[0] == 80.00);          // taken from the CA record
  int atoms = 0;
  for (int s = 0; s < num_atom_slots; ++s) atoms += p.has_atom(0, s) ? 1 : 0;
  CHECK(atoms == 5);  // N, CA, C, O, CB; no OXT, no H
}

TEST_CASE("parser errors carry specific kinds") {
  CHECK_THROWS_WITH_AS(parse_pdb(""), doctest::Contains("MalformedRecord"), Error);
  CHECK_THROWS_WITH_AS(
      parse_pdb("ATOM      1  CA  XXX A   1       0.000   0.000   0.000  1.00  0.00           C\n"),
      doctest::Contains("UnknownResidue"), Error);
  CHECK_THROWS_WITH_AS(
      parse_pdb("ATOM      1  N   ALA A   1       0.000   0.000   0.000  1.00  0.00           N\n"),
      doctest::Contains("MissingCA"), Error);
}

TEST_CASE("multi-chain parse keeps author numbering per chain") {
  const std::string text =
      "ATOM      1  N   GLY A  41       0.000   0.000   0.000  1.00 10.00           N\n"
      "ATOM      2  CA  GLY A  41       1.500   0.000   0.000  1.00 10.00           C\n"
      "ATOM      3  C   GLY A  41       2.200   1.300   0.000  1.00 10.00           C\n"
      "ATOM      4  O   GLY A  41       1.700   2.400   0.000  1.00 10.00           O\n"
      "ATOM      5  CA  GLY A  43       5.000   0.000   0.000  1.00 11.00           C\n"
      "TER\n"
      "ATOM      6  CA  ALA B   7       9.000   0.000   0.000  1.00 12.00           C\n"
      "ATOM      7  CB  ALA B   7       9.000   1.500   0.000  1.00 12.00           C\n"
      "END\n"
      "ATOM      8  CA  TRP C   1       0.000   0.000   9.000  1.00 13.00           C\n";
  const auto chains = parse_pdb_all_chains(text);
  REQUIRE(chains.size() == 2);  // END stops the read before chain C
  CHECK(chains[0].chain == 'A');
  CHECK(chains[0].resnum == std::vector<int>{41, 43});  // gaps preserved
  CHECK(chains[0].structure.length() == 2);
  CHECK(chains[1].chain == 'B');
  CHECK(chains[1].resnum == std::vector<int>{7});
  CHECK(chains[1].structure.seq[0] == ResidueType::ALA);
  // parse_pdb sees only the first chain.
  CHECK(parse_pdb(text).length() == 2);
}

TEST_CASE("centered moves the CA centroid to the origin") {
  Rng rng(11);
  ProteinStructure p = make_toy_protein(8, rng);
  for (int i = 0; i < p.length(); ++i)
    for (int s = 0; s < num_atom_slots; ++s)
      if (p.has_atom(i, s)) p.atom(i, s) = p.atom(i, s) + Vec3{5.0, -2.0, 1.0};
  const ProteinStructure c = centered(p);
  Vec3 centroid{0, 0, 0};
  for (int i = 0; i < c.length(); ++i) centroid = centroid + c.atom(i, slot_CA);
  CHECK(norm(centroid) < 1e-9);
  // Masked-out entries stay exactly zero.
  for (int i = 0; i < c.length(); ++i)
    for (int s = 0; s < num_atom_slots; ++s)
      if (!c.has_atom(i, s)) CHECK(norm(c.atom(i, s)) == 0.0);
}

TEST_CASE("validate rejects structural corruption") {
  Rng rng(13);
  ProteinStructure p = make_toy_protein(6, rng);
  SUBCASE("missing CA") {
    p.mask[size_t(2) * num_atom_slots + slot_CA] = 0;
    p.atom(2, slot_CA) = Vec3{0, 0, 0};
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("InvalidStructure"), Error);
  }
  SUBCASE("atom outside the canonical set") {
    // GLY cannot carry a CB; find a GLY or force one.
    p.seq[1] = ResidueType::GLY;
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("InvalidStructure"), Error);
  }
  SUBCASE("masked-out coordinate not zero") {
    p.mask[size_t(1) * num_atom_slots + 30] = 0;
    p.xyz[size_t(1) * num_atom_slots + 30] = Vec3{1, 0, 0};
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("InvalidStructure"), Error);
  }
  SUBCASE("non-finite coordinate") {
    p.atom(0, slot_CA)[1] = std::nan("");
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("InvalidStructure"), Error);
  }
}

TEST_CASE("peptide bond graph covers every canonical bond") {
  for (int t = 0; t < num_residue_types; ++t) {
    const auto rt = ResidueType(t);
    std::set<int> touched;
    for (const auto& [a, b] : residue_bonds(rt)) {
      CHECK(residue_has_atom(rt, a));
      CHECK(residue_has_atom(rt, b));
      touched.insert(a);
      touched.insert(b);
    }
    // Every atom of the residue participates in at least one bond.
    CHECK(int(touched.size()) == residue_atom_count(rt));
  }
}
