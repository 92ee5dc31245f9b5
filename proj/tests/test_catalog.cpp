#include <gtest/gtest.h>

#include <sstream>

#include "imdesign/catalog.hpp"

using namespace imdesign;

namespace {

// Independent of find_feasible_point: counts every satisfying lattice point.
int count_feasible(const BaseMachine& m, const TargetBands& bands) {
  int n = 0;
  for (int l = m.length.lo; l <= m.length.hi; ++l)
    for (int t = m.turns.lo; t <= m.turns.hi; ++t)
      for (int h = m.tooth_tip.lo; h <= m.tooth_tip.hi; ++h) {
        const auto p = surrogate::evaluate(DesignPoint{l, t, h}, m);
        const auto v = p.values();
        bool ok = true;
        for (std::size_t i = 0; i < kSlotCount; ++i) ok = ok && bands[i].low <= v[i] && v[i] <= bands[i].high;
        n += ok;
      }
  return n;
}

}  // namespace

TEST(BuiltinCatalog, RatedData) {
  const auto ms = catalog::builtin_catalog();
  ASSERT_EQ(ms.size(), 3u);
  EXPECT_EQ(ms[0].rated_power_kw, 2500.0);
  EXPECT_EQ(ms[0].line_voltage_v, 10000.0);
  EXPECT_EQ(ms[1].rated_power_kw, 600.0);
  EXPECT_EQ(ms[1].line_voltage_v, 6000.0);
  EXPECT_EQ(ms[2].rated_power_kw, 2100.0);
  EXPECT_EQ(ms[2].line_voltage_v, 6000.0);
}

TEST(BuiltinCatalog, LatticeAndBaseDesigns) {
  const auto ms = catalog::builtin_catalog();
  const double l0[] = {1.2, 0.6, 1.0};
  const int n0[] = {20, 28, 18};
  const double h0[] = {2.0, 1.5, 2.0};
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto& m = ms[i];
    EXPECT_NO_THROW(catalog::validate(m));
    EXPECT_DOUBLE_EQ(m.length_m(m.base_design), l0[i]);
    EXPECT_EQ(m.base_design.turns, n0[i]);
    EXPECT_DOUBLE_EQ(m.tooth_tip_mm(m.base_design), h0[i]);
    EXPECT_EQ(m.length.size(), 31);
    EXPECT_EQ(m.turns.size(), 21);
    EXPECT_EQ(m.tooth_tip.size(), 21);
    EXPECT_EQ(m.lattice_size(), 13671u);
    EXPECT_DOUBLE_EQ(m.length.step(), 0.05 * l0[i]);
    EXPECT_DOUBLE_EQ(m.tooth_tip.step(), 0.1 * h0[i]);
    EXPECT_DOUBLE_EQ(m.length_m(DesignPoint{m.length.lo, 0, 0}), 0.5 * l0[i]);
    EXPECT_DOUBLE_EQ(m.length_m(DesignPoint{m.length.hi, 0, 0}), 2.0 * l0[i]);
    EXPECT_DOUBLE_EQ(m.tooth_tip_mm(DesignPoint{0, 0, m.tooth_tip.hi}), 2.5 * h0[i]);
  }
}

TEST(BuiltinCatalog, LatticeIndexRoundTrip) {
  const auto m = catalog::builtin_catalog()[1];
  for (std::size_t i = 0; i < m.lattice_size(); ++i) ASSERT_EQ(m.lattice_index(m.lattice_point(i)), i);
}

TEST(Validate, RejectsBadMachines) {
  auto m = catalog::builtin_catalog()[0];
  m.rated_power_kw = 0.0;
  EXPECT_THROW(catalog::validate(m), ContractViolation);
  m = catalog::builtin_catalog()[0];
  m.base_design.length = 41;
  EXPECT_THROW(catalog::validate(m), ContractViolation);
}

TEST(GenerateVariants, Deterministic) {
  const auto m = catalog::builtin_catalog()[0];
  EXPECT_EQ(catalog::generate_variants(m, 25, 7), catalog::generate_variants(m, 25, 7));
}

TEST(GenerateVariants, SeedChangesInitialDesigns) {
  const auto m = catalog::builtin_catalog()[0];
  const auto a = catalog::generate_variants(m, 25, 7);
  const auto b = catalog::generate_variants(m, 25, 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].initial_design != b[i].initial_design;
  EXPECT_TRUE(differs);
}

TEST(GenerateVariants, EachVariantIsIndividuallyReproducible) {
  const auto m = catalog::builtin_catalog()[2];
  const auto many = catalog::generate_variants(m, 10, 99);
  const auto few = catalog::generate_variants(m, 3, 99);
  for (std::size_t i = 0; i < few.size(); ++i) EXPECT_EQ(few[i], many[i]);
  EXPECT_EQ(many[4].variant_seed, catalog::variant_seed(99, m.id, 4));
}

TEST(GenerateVariants, SamplerRangesAndCertification) {
  for (const auto& m : catalog::builtin_catalog()) {
    for (const auto& v : catalog::generate_variants(m, 25, 2023)) {
      EXPECT_TRUE(v.feasible_exists);
      EXPECT_EQ(v.base_id, m.id);
      EXPECT_TRUE(m.contains(v.initial_design));
      EXPECT_GE(v.initial_design.length, 16);
      EXPECT_LE(v.initial_design.length, 26);
      EXPECT_LE(std::abs(v.initial_design.turns - m.base_design.turns), 5);
      EXPECT_GE(v.initial_design.tooth_tip, 7);
      EXPECT_LE(v.initial_design.tooth_tip, 16);
      const double spread[] = {0.03, 0.05, 0.05, 0.03};
      const double half[] = {0.08, 0.15, 0.15, 0.10};
      for (std::size_t s = 0; s < 4; ++s) {
        const double center = 0.5 * (v.bands[s].low + v.bands[s].high);
        EXPECT_NEAR(v.bands[s].high - v.bands[s].low, 2 * half[s], 1e-12);
        EXPECT_LE(std::abs(center - 1.0), spread[s] + 1e-12);
      }
      EXPECT_DOUBLE_EQ(v.bands[4].low, 0.6 * m.tooth_tip.anchor);
      EXPECT_DOUBLE_EQ(v.bands[4].high, 2.2 * m.tooth_tip.anchor);
      EXPECT_GE(count_feasible(m, v.bands), 1);
    }
  }
}

TEST(GenerateVariants, CountMustBePositive) {
  EXPECT_THROW(catalog::generate_variants(catalog::builtin_catalog()[0], 0, 1), ContractViolation);
}

TEST(GenerateVariants, ExhaustsOnImpossibleBands) {
  catalog::SamplerConfig cfg;
  cfg.half_width = {0.0, 0.0, 0.0, 0.0};
  cfg.center_spread = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(catalog::generate_variants(catalog::builtin_catalog()[0], 1, 1, cfg), GenerationExhausted);
}

TEST(StandardSplit, SeventyFivePlusFifteen) {
  const auto ms = catalog::builtin_catalog();
  const auto all = catalog::standard_split(ms, 2023);
  EXPECT_EQ(all.size(), 90u);
  EXPECT_EQ(catalog::select(all, false).size(), 75u);
  EXPECT_EQ(catalog::select(all, true).size(), 15u);
}

TEST(Persistence, RoundTrip) {
  const auto all = catalog::standard_split(catalog::builtin_catalog(), 11);
  std::stringstream ss;
  catalog::write(ss, all);
  EXPECT_EQ(catalog::read(ss), all);
}

TEST(Persistence, FileRoundTrip) {
  const auto vs = catalog::select(catalog::standard_split(catalog::builtin_catalog(), 5), false);
  const std::string path = ::testing::TempDir() + "catalog_roundtrip.txt";
  catalog::save_catalog(vs, path);
  EXPECT_EQ(catalog::load_catalog(path), vs);
}

TEST(Persistence, EmptyFileIsMalformed) {
  std::stringstream ss;
  EXPECT_THROW(catalog::read(ss), MalformedFile);
}

TEST(Persistence, HeaderOnlyIsMalformed) {
  std::stringstream ss("motor-design-catalog v1\n");
  EXPECT_THROW(catalog::read(ss), MalformedFile);
}

TEST(Persistence, MissingBandReportsLine) {
  const auto vs = catalog::generate_variants(catalog::builtin_catalog()[0], 1, 3);
  std::stringstream out;
  catalog::write(out, vs);
  std::string text = out.str();
  const auto pos = text.find("band.i_start");
  text.erase(pos, text.find('\n', pos) - pos + 1);
  std::stringstream in(text);
  try {
    catalog::read(in);
    FAIL() << "expected MalformedFile";
  } catch (const MalformedFile& e) {
    EXPECT_GT(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("band.i_start"), std::string::npos);
  }
}

TEST(Persistence, VersionMismatch) {
  std::stringstream ss("motor-design-catalog v2\n[variant]\n");
  EXPECT_THROW(catalog::read(ss), VersionMismatch);
}

TEST(Persistence, GarbageLineReportsLineNumber) {
  std::stringstream ss("motor-design-catalog v1\n# comment\n[variant]\nthis is not a pair\n");
  try {
    catalog::read(ss);
    FAIL() << "expected MalformedFile";
  } catch (const MalformedFile& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}
