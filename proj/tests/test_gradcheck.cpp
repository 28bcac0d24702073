#include <set>
#include <string>

#include "doctest.h"
#include "errors.h"
#include "gradcheck.h"

using namespace melvae;

TEST_CASE("a fresh checkout passes the gradient check" * doctest::timeout(120)) {
  GradCheckReport report = runGradCheck();
  CHECK(report.passed());
  REQUIRE(report.cases.size() == 14);

  std::set<std::string> names;
  for (const GradCheckCase& c : report.cases) {
    CHECK_MESSAGE(c.passed(), c.name, ": ", c.max_rel_err);
    CHECK(c.coordinates > 0);
    CHECK(c.max_rel_err >= 0.0);
    CHECK(!c.worst_coordinate.empty());
    names.insert(c.name);
  }
  // The two end-to-end objectives run at the reduced dims and loose tolerance.
  CHECK(names.count("objective") == 1);
  CHECK(names.count("multitask objective") == 1);
  for (const GradCheckCase& c : report.cases) {
    bool objective = c.name == "objective" || c.name == "multitask objective";
    CHECK(c.tolerance == (objective ? 1e-3 : 1e-4));
  }
}

TEST_CASE("gradient check is deterministic in the seed" * doctest::timeout(240)) {
  GradCheckReport a = runGradCheck(5);
  GradCheckReport b = runGradCheck(5);
  REQUIRE(a.cases.size() == b.cases.size());
  for (size_t i = 0; i < a.cases.size(); ++i) {
    CHECK(a.cases[i].max_rel_err == b.cases[i].max_rel_err);
    CHECK(a.cases[i].worst_coordinate == b.cases[i].worst_coordinate);
  }
}

TEST_CASE("gradcheck text report lists one row per op") {
  GradCheckReport report;
  report.cases.push_back({"matmul", 2.5e-9, 1e-4, 24, "a[3]"});
  report.cases.push_back({"objective", 4.0e-5, 1e-3, 2776, "enc.mu.w[17]"});
  CHECK(report.passed());

  std::string text = gradCheckText(report);
  CHECK(text.rfind("gradient check\n", 0) == 0);
  CHECK(text.find("matmul") != std::string::npos);
  CHECK(text.find("2.500e-09") != std::string::npos);
  CHECK(text.find("enc.mu.w[17]") != std::string::npos);
  CHECK(text.find("all 2 suites within tolerance") != std::string::npos);
  CHECK(text.find("FAIL") == std::string::npos);
}

TEST_CASE("a case over tolerance fails the report and is named") {
  GradCheckReport report;
  report.cases.push_back({"matmul", 2.5e-9, 1e-4, 24, "a[3]"});
  report.cases.push_back({"bceMean", 3.0e-2, 1e-4, 12, "logits[7]"});
  CHECK(!report.passed());
  CHECK(report.worst().name == "bceMean");

  std::string text = gradCheckText(report);
  CHECK(text.find("FAIL") != std::string::npos);
  CHECK(text.find("FAILED: worst offender bceMean at logits[7]") != std::string::npos);
}

TEST_CASE("the worst case is the one consuming most of its tolerance") {
  GradCheckReport report;
  // 8e-5 of 1e-4 (80%) vs 5e-4 of 1e-3 (50%): the op suite is worse.
  report.cases.push_back({"tanh", 8.0e-5, 1e-4, 9, "a[0]"});
  report.cases.push_back({"objective", 5.0e-4, 1e-3, 100, "dec.out.w[1]"});
  CHECK(report.passed());
  CHECK(report.worst().name == "tanh");
}

TEST_CASE("an empty report cannot pass") {
  GradCheckReport report;
  CHECK(!report.passed());
  CHECK_THROWS_AS(report.worst(), NumericError);
}
