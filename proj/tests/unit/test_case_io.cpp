#include <doctest.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "neuropf/case_io.hpp"
#include "neuropf/errors.hpp"
#include "../oracles.hpp"

using namespace neuropf;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyCase = R"(function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1.02	0	230	1	1.1	0.9;
	2	2	20	5	0	0	1	1	0	230	1	1.1	0.9;
	3	1	50	10	0	19	1	1	0	230	1	1.1	0.9;
	4	2	10	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1.02	100	1	200	0;
	2	40	0	100	-100	1.01	100	1	200	0;
	4	30	0	100	-100	1.03	100	0	200	0;
];
mpc.branch = [
	1	2	0.01	0.1	0.02	0	0	0	0	0	1	-360	360;
	2	3	0.02	0.2	0	0	0	0	0.98	2	1	-360	360;
	3	4	0.01	0.1	0	0	0	0	0	0	1	-360	360;
	1	4	0.01	0.1	0	0	0	0	0	0	0	-360	360;
];
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto k = s.find(from);
  REQUIRE(k != std::string::npos);
  return s.replace(k, from.size(), to);
}

}  // namespace

TEST_CASE("IEEE14 counts and input dimension") {
  const CaseData d = load_case(oracle::data_path("case14.m"));
  CHECK(d.name == "case14");
  CHECK(d.buses.size() == 14);
  CHECK(d.branches.size() == 20);
  CHECK(d.gens.size() == 5);
  CHECK(d.bus_sets.pv_idxs.size() == 4);
  CHECK(d.bus_sets.pq_idxs.size() == 9);
  CHECK(d.input_dim() == 22);
  CHECK(d.buses[d.bus_sets.slack_idx].id == 1);
}

TEST_CASE("IEEE118 follows the TYPE column") {
  const CaseData d = load_case(oracle::data_path("case118.m"));
  CHECK(d.buses.size() == 118);
  CHECK(d.gens.size() == 54);
  CHECK(d.bus_sets.pv_idxs.size() == 53);
  CHECK(d.bus_sets.pq_idxs.size() == 64);
}

TEST_CASE("bus sets partition the buses") {
  for (const char* f : {"case14.m", "case39.m", "case118.m", "case300.m"}) {
    const CaseData d = load_case(oracle::data_path(f));
    const auto& s = d.bus_sets;
    std::vector<int> seen(d.buses.size(), 0);
    seen[s.slack_idx]++;
    for (auto i : s.pv_idxs) seen[i]++;
    for (auto i : s.pq_idxs) seen[i]++;
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(s.non_slack.size() == d.buses.size() - 1);
    CHECK(std::is_sorted(s.pv_idxs.begin(), s.pv_idxs.end()));
    CHECK(std::is_sorted(s.pq_idxs.begin(), s.pq_idxs.end()));
  }
}

TEST_CASE("parsing drops out-of-service elements and demotes orphan PV buses") {
  const CaseData d = parse_matpower_case(kTinyCase);
  CHECK(d.name == "tiny");
  CHECK(d.branches.size() == 3);
  CHECK(d.gens.size() == 2);
  // bus 4 is typed PV but its only generator is out of service
  CHECK(d.buses[3].bus_type == BusType::PQ);
  CHECK(d.bus_sets.pv_idxs == std::vector<std::size_t>{1});
  CHECK(d.bus_sets.pq_idxs == std::vector<std::size_t>{2, 3});
  CHECK(d.branches[1].tap == doctest::Approx(0.98));
  CHECK(d.branches[1].shift == doctest::Approx(2.0));
  CHECK(d.buses[2].Bs == doctest::Approx(19.0));
}

TEST_CASE("parse is deterministic") {
  CHECK(parse_matpower_case(kTinyCase) == parse_matpower_case(kTinyCase));
}

TEST_CASE("MATPOWER errors") {
  SUBCASE("missing block names it") {
    const std::string text = replace(kTinyCase, "mpc.branch = [", "mpc.brunch = [");
    try {
      parse_matpower_case(text);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("mpc.branch") != std::string::npos);
    }
  }
  SUBCASE("duplicate bus id") {
    const std::string text = replace(kTinyCase, "\t4\t2\t10", "\t3\t2\t10");
    CHECK_THROWS_AS(parse_matpower_case(text), ValidationError);
  }
  SUBCASE("no slack") {
    const std::string text = replace(kTinyCase, "\t1\t3\t0", "\t1\t2\t0");
    CHECK_THROWS_AS(parse_matpower_case(text), ValidationError);
  }
  SUBCASE("two slacks") {
    const std::string text = replace(kTinyCase, "\t2\t2\t20", "\t2\t3\t20");
    CHECK_THROWS_AS(parse_matpower_case(text), ValidationError);
  }
  SUBCASE("branch to unknown bus") {
    const std::string text = replace(kTinyCase, "\t3\t4\t0.01", "\t3\t9\t0.01");
    CHECK_THROWS_AS(parse_matpower_case(text), ValidationError);
  }
  SUBCASE("zero impedance branch") {
    const std::string text = replace(kTinyCase, "\t3\t4\t0.01\t0.1", "\t3\t4\t0\t0");
    CHECK_THROWS_AS(parse_matpower_case(text), ValidationError);
  }
  SUBCASE("self loop") {
    const std::string text = replace(kTinyCase, "\t3\t4\t0.01", "\t3\t3\t0.01");
    CHECK_THROWS_AS(parse_matpower_case(text), ValidationError);
  }
}

TEST_CASE("single bus case without branches") {
  const std::string text = R"(function mpc = one
mpc.baseMVA = 100;
mpc.bus = [1 3 0 0 0 0 1 1 0 100 1 1.1 0.9];
mpc.gen = [1 0 0 0 0 1 100 1 0 0];
mpc.branch = [];
)";
  const CaseData d = parse_matpower_case(text);
  CHECK(d.buses.size() == 1);
  CHECK(d.branches.empty());
  CHECK(d.input_dim() == 0);
}

TEST_CASE("native round trip") {
  for (const char* f : {"case14.m", "case39.m", "case118.m", "case300.m"}) {
    const CaseData d = load_case(oracle::data_path(f));
    const CaseData back = parse_native_case(export_native_case(d));
    CHECK(back == d);
    CHECK(export_native_case(back) == export_native_case(d));
  }
  const CaseData tiny = parse_matpower_case(kTinyCase);
  CHECK(parse_native_case(export_native_case(tiny)) == tiny);
}

TEST_CASE("native IEEE39 fixture") {
  const CaseData d = load_case(oracle::data_path("case39.json"));
  CHECK(d.buses.size() == 39);
  CHECK(d.branches.size() == 46);
  CHECK(d.gens.size() == 10);
  const CaseData m = load_case(oracle::data_path("case39.m"));
  CHECK(d.buses == m.buses);
  CHECK(d.branches == m.branches);
  CHECK(d.gens == m.gens);
  CHECK(d.bus_sets == m.bus_sets);
}

TEST_CASE("native schema errors carry a JSON pointer") {
  const std::string good = export_native_case(parse_matpower_case(kTinyCase));
  auto path_of = [](const std::string& text) -> std::string {
    try {
      parse_native_case(text);
    } catch (const SchemaError& e) {
      return e.path();
    }
    return "<no error>";
  };
  SUBCASE("missing base_MVA") {
    const auto k = good.find("\"base_MVA\"");
    std::string text = good;
    text.replace(k, 10, "\"baseMVA_x\"");
    CHECK(path_of(text) == "/base_MVA");
  }
  SUBCASE("wrong type deep inside") {
    const std::string text = replace(good, "\"Vm\": 1.02", "\"Vm\": \"high\"");
    CHECK(path_of(text) == "/buses/0/Vm");
  }
  SUBCASE("bad bus type") {
    const std::string text = replace(good, "\"bus_type\": \"PV\"", "\"bus_type\": \"XX\"");
    CHECK(path_of(text) == "/buses/1/bus_type");
  }
  SUBCASE("not JSON") { CHECK_THROWS_AS(parse_native_case("{"), ParseError); }
}

TEST_CASE("base injections") {
  SUBCASE("per-unit definition") {
    const CaseData d = oracle::two_bus_case(100.0, 0.0);
    const PowerInjection s = base_injections(d);
    CHECK(s.P[1] == doctest::Approx(-1.0));
  }
  SUBCASE("generation minus load") {
    CaseData d = oracle::two_bus_case(20.0, 0.0);
    Generator g;
    g.bus = 2;
    g.Pg = 50.0;
    g.Vg = 1.0;
    d.gens.push_back(g);
    finalize_case(d);
    CHECK(base_injections(d).P[1] == doctest::Approx(0.3));
  }
  SUBCASE("IEEE14 column sums") {
    const CaseData d = load_case(oracle::data_path("case14.m"));
    const PowerInjection s = base_injections(d);
    // sum(PG) - sum(PD) from the file: 272.4 - 259.0 MW
    CHECK(s.P.sum() == doctest::Approx(0.134).epsilon(1e-12));
    double non_slack = 0.0;
    for (auto i : d.bus_sets.non_slack) non_slack += s.P[static_cast<Eigen::Index>(i)];
    CHECK(non_slack == doctest::Approx(-2.19).epsilon(1e-12));
    CHECK(non_slack < 0.0);
  }
}
