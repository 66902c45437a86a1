#include <gtest/gtest.h>

#include "mvlift/io.hpp"

using namespace mvlift;

namespace {

const char* kMinimal = R"({
  "domain": {"kind": "interval", "nodes": 3},
  "target": {"axes": [{"cells": 2}]},
  "measure": {"rows": [[1, 0], [0.5, 0.5], [0, 1]]}
})";

std::string schema_field(const std::string& text) {
  try {
    parse_instance_text(text);
  } catch (const SchemaError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(ParseInstance, MinimalFillsDefaults) {
  const Instance I = parse_instance_text(kMinimal);
  EXPECT_EQ(I.domain.size(), 3u);
  EXPECT_DOUBLE_EQ(I.domain.measure(), 1.0);
  EXPECT_EQ(I.grid.size(), 2u);
  EXPECT_DOUBLE_EQ(I.grid.axis(0).max, 1.0);
  EXPECT_EQ(I.W.kind(), IntegrandKind::quadratic);
  EXPECT_DOUBLE_EQ(I.W.coeff(), 0.5);
  EXPECT_FALSE(I.data.active());
  EXPECT_EQ(I.mask.size(), 3u);
  EXPECT_DOUBLE_EQ(I.solver.tol, 1e-6);
  EXPECT_TRUE(I.solver.deterministic);
  EXPECT_EQ(I.mu.rho(1, 1), 0.5);
}

TEST(ParseInstance, SchemaErrorsNameTheField) {
  EXPECT_EQ(schema_field(R"({"domain": {"nodes": -3}, "target": {"axes": [{"cells": 2}]}, "measure": {"rows": []}})"),
            "domain.nodes");
  EXPECT_EQ(schema_field(R"({"domain": {"nodes": 1}, "target": {"axes": [{"cells": 2}]}, "measure": {"rows": [[1, 0]]}})"),
            "domain.nodes");
  EXPECT_EQ(schema_field(R"({"domain": {"nodes": 2, "colour": 1}, "target": {"axes": [{"cells": 2}]}, "measure": {"rows": []}})"),
            "domain.colour");
  EXPECT_EQ(schema_field(R"({"domain": {"nodes": 2}, "target": {"axes": [{"cells": 2}]}, "measure": {"rows": [[1, 0], [0.5, 0.4]]}})"),
            "measure.rows");
  EXPECT_EQ(schema_field(R"({"domain": {"nodes": 2}, "target": {"axes": [{"cells": 1}]}, "measure": {"rows": []}})"),
            "target.axes[0].cells");
  EXPECT_EQ(schema_field(R"({"measure": {"generator": "nope"}})"), "measure.generator");
  EXPECT_EQ(schema_field(R"({"measure": {"generator": "sqrt_circle", "params": {"N": 8, "M": 2}}})"), "measure.params.M");
  EXPECT_EQ(schema_field(R"({"domain": {"nodes": 2}, "measure": {"generator": "sqrt_circle", "params": {"N": 8}}})"), "domain");
  EXPECT_EQ(schema_field(R"({"measure": {"generator": "sqrt_circle", "params": {"N": 7}}})"), "measure.params");
  EXPECT_EQ(schema_field(R"({"extra": 1, "measure": {"generator": "sqrt_circle", "params": {"N": 8}}})"), "extra");
}

TEST(ParseInstance, SyntaxErrorCarriesPosition) {
  try {
    parse_instance_text("{\n  \"domain\": {\"nodes\": 3},\n  \"target\" {}\n}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GE(e.column(), 10u);
  }
}

TEST(ParseInstance, CanonicalRoundTripIsByteStable) {
  const std::string once = write_instance(parse_instance_text(kMinimal));
  const std::string twice = write_instance(parse_instance_text(once));
  EXPECT_EQ(once, twice);
  EXPECT_LT(once.find("\"data_term\""), once.find("\"domain\""));

  const std::string gen =
      R"({"measure": {"generator": "sqrt_disk", "params": {"n": 9}, "regularize": {"lambda": 0.1}}, "solver": {"seed": 7, "eps": [0.1]}})";
  const std::string g1 = write_instance(parse_instance_text(gen));
  EXPECT_EQ(g1, write_instance(parse_instance_text(g1)));
  EXPECT_EQ(instance_digest(parse_instance_text(gen)), fnv1a_hex(g1));
}

TEST(ParseInstance, Generators) {
  const Instance c = parse_instance_text(R"({"measure": {"generator": "sqrt_circle", "params": {"N": 8}}})");
  const auto ref = build_sqrt_circle(8);
  EXPECT_EQ(c.domain.size(), 8u);
  EXPECT_EQ((c.mu.rho - ref.mu.rho).norm(), 0.0);

  const std::string mix = R"({"domain": {"kind": "circle", "nodes": 5}, "target": {"axes": [{"cells": 4, "periodic": true}]},
    "measure": {"generator": "step_mixture", "params": {"maps": 3}}, "solver": {"seed": 11}})";
  const Instance m1 = parse_instance_text(mix), m2 = parse_instance_text(mix);
  EXPECT_EQ(m1.mu.rho, m2.mu.rho);
  std::mt19937_64 rng(11);
  EXPECT_EQ(m1.mu.rho, random_step_mixture(m1.domain, m1.grid, 3, rng).rho);

  const Instance u = parse_instance_text(R"({"domain": {"nodes": 3}, "target": {"axes": [{"cells": 4}]},
    "measure": {"generator": "map", "params": {"values": [0.125, 0.375, 0.875]}}})");
  EXPECT_EQ(u.mu.rho(0, 0), 1.0);
  EXPECT_EQ(u.mu.rho(2, 3), 1.0);
}

TEST(ParseInstance, DataTermAndMask) {
  const Instance I = parse_instance_text(R"({"domain": {"nodes": 3}, "target": {"axes": [{"cells": 2}]},
    "measure": {"rows": [[1, 0], [0.5, 0.5], [0, 1]]}, "mask": [0, 1],
    "data_term": {"kind": "fidelity", "targets": [[0.25], [0.25], [0.75]], "coeff": 2},
    "integrand": {"kind": "p_power", "p": 3}})");
  EXPECT_EQ(I.mask.edges().size(), 1u);
  EXPECT_TRUE(I.data.active());
  EXPECT_DOUBLE_EQ(I.data.at_cell(0, 1, I.grid.center(1), 1), 2.0 * 0.25);
  EXPECT_DOUBLE_EQ(I.W.p(), 3.0);
  EXPECT_DOUBLE_EQ(I.W.coeff(), 1.0);
}

TEST(RunReport, ExitCodesAndAssertions) {
  RunReport r;
  EXPECT_TRUE(r.check_le("a", 1.0, 1.0, 0.0));
  EXPECT_EQ(r.exit_code(), 0);
  EXPECT_FALSE(r.check_near("b", 1.0, 1.1, 1e-3));
  EXPECT_EQ(r.exit_code(), 1);
  r.converged = false;
  EXPECT_EQ(r.exit_code(), 2);
  const Json j = r.to_json(false);
  EXPECT_FALSE(j.contains("wall_times"));
  EXPECT_EQ(j["assertions"][1]["lhs"], 1.0);
  EXPECT_EQ(j["assertions"][1]["rhs"], 1.1);
  EXPECT_EQ(num(kInf), "inf");
  EXPECT_EQ(to_double(num(-kInf), "x"), -kInf);
}

TEST(Csv, FixedHeader) {
  RefinementStudy s;
  s.name = "t";
  s.add(8, {{"b", 2.0}, {"a", 1.0}});
  s.add(16, {{"b", 4.0}, {"a", 0.5}});
  EXPECT_EQ(study_csv(s).str(), "resolution,a,b\n8,1,2\n16,0.5,4\n");
}

TEST(Payloads, RoundTrip) {
  Coupling Q{{0, 2}, {{{1, 0}, 0.25}, {{0, 1}, 0.75}}};
  const Coupling P = coupling_from_json(Json::parse(coupling_to_json(Q).dump()), "c");
  ASSERT_EQ(P.atoms.size(), 2u);
  EXPECT_EQ(P.nodes, Q.nodes);
  EXPECT_EQ(P.atoms[1].cells, Q.atoms[1].cells);
  EXPECT_EQ(P.atoms[1].mass, 0.75);
  Eigen::MatrixXd m(2, 2);
  m << 1, -kInf, 0.1, 3;
  EXPECT_EQ(matrix_from_json(Json::parse(matrix_to_json(m).dump()), 2, 2, "m"), m);
  EXPECT_THROW(matrix_from_json(matrix_to_json(m), 3, 2, "m"), SchemaError);
}
