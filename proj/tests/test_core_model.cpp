#include <doctest.h>

#include <optional>
#include <string>
#include <vector>

#include "hila/core_model.hpp"

using namespace hila;
using Ans = std::optional<std::string>;

namespace {

// Hand-built before the normalizer: formatting noise in, exact decimal string out.
struct CanonCase {
  const char* in;
  Ans out;
};

const CanonCase kCanonTable[] = {
    {"42", "42"},
    {"042", "42"},
    {"0", "0"},
    {"000", "0"},
    {"1,299", "1299"},
    {"1,299.0", "1299"},
    {"1,299.50", "1299.5"},
    {"12,345,678", "12345678"},
    {"3.14", "3.14"},
    {"3.140", "3.14"},
    {"3.0", "3"},
    {"3.", "3"},
    {".5", "0.5"},
    {"0.50", "0.5"},
    {"-7", "-7"},
    {"-0", "0"},
    {"-0.0", "0"},
    {"+8", "8"},
    {"-1,000.00", "-1000"},
    {"  17  ", "17"},
    {"100", "100"},
    {"1000.000", "1000"},
    {"0.001", "0.001"},
    {"007.700", "7.7"},
    {"1,2,3", std::nullopt},
    {"12,34", std::nullopt},
    {"abc", std::nullopt},
    {"", std::nullopt},
    {"-", std::nullopt},
    {"1.2.3", std::nullopt},
};

}  // namespace

TEST_CASE("canonicalization table") {
  static_assert(std::size(kCanonTable) == 30);
  for (const auto& c : kCanonTable) {
    CAPTURE(c.in);
    CHECK(canonicalize_number(c.in) == c.out);
  }
}

TEST_CASE("normalize_answer per kind") {
  CHECK(normalize_answer("so the total is \\boxed{42}", TaskKind::MathBoxed) == Ans("42"));
  CHECK(normalize_answer("\\boxed{1} then \\boxed{\\frac{1}{2}}", TaskKind::MathBoxed) == Ans("\\frac{1}{2}"));
  CHECK(normalize_answer("\\boxed{}", TaskKind::MathBoxed) == std::nullopt);
  CHECK(normalize_answer("no box here\nat all", TaskKind::MathBoxed) == std::nullopt);

  CHECK(normalize_answer("The answer is 1,299.0\n1299", TaskKind::MathNumeric) == Ans("1299"));
  CHECK(normalize_answer("first 3 then 4.50", TaskKind::MathNumeric) == Ans("4.5"));
  CHECK(normalize_answer("it is -12", TaskKind::MathNumeric) == Ans("-12"));
  CHECK(normalize_answer("line with 9\n\n  \n", TaskKind::MathNumeric) == Ans("9"));
  CHECK(normalize_answer("x2 is the variable", TaskKind::MathNumeric) == std::nullopt);
  CHECK(normalize_answer("", TaskKind::MathNumeric) == std::nullopt);

  CHECK(normalize_answer("I cannot decide.", TaskKind::MultipleChoice) == std::nullopt);
  CHECK(normalize_answer("(b)", TaskKind::MultipleChoice) == Ans("B"));
  CHECK(normalize_answer("The answer is c.", TaskKind::MultipleChoice) == Ans("C"));
  CHECK(normalize_answer("reasoning...\nD", TaskKind::MultipleChoice) == Ans("D"));

  CHECK(normalize_answer("some text\n```\nprint(1)\n```\n", TaskKind::Code) == Ans("print(1)"));
  CHECK(normalize_answer("  first\nlast line  \n\n", TaskKind::Generic) == Ans("last line"));
}

TEST_CASE("plurality aggregation") {
  using V = std::vector<Ans>;
  CHECK(aggregate_final(V{"7", "7", "9"}) == "7");
  CHECK(aggregate_final(V{"a", "b", "c"}) == "a");
  CHECK(aggregate_final(V{std::nullopt, "5", "5"}) == "5");
  CHECK(aggregate_final(V{"9", "7", "7", "9"}) == "9");
  CHECK(aggregate_final(V{std::nullopt, std::nullopt}).empty());
}

TEST_CASE("action serialization round trip") {
  CHECK(StrategicAction::eval(2).serialize() == "EVAL 2");
  CHECK(StrategicAction::create().serialize() == "CREATE");
  CHECK(StrategicAction::defer().serialize() == "DEFER");
  for (auto t : kAllActionTypes) CHECK(parse_action_type(to_string(t)) == t);
  CHECK_THROWS(parse_action_type("NOPE"));
}

TEST_CASE("task validation") {
  TaskInstance t{"t1", TaskKind::MultipleChoice, "pick", std::string("B"), {"A", "B"}, std::nullopt};
  CHECK_NOTHROW(t.validate());
  TaskInstance bad_gold = t;
  bad_gold.gold = "C";
  CHECK_THROWS_AS(bad_gold.validate(), std::invalid_argument);
  TaskInstance empty_id = t;
  empty_id.id.clear();
  CHECK_THROWS_AS(empty_id.validate(), std::invalid_argument);
  for (auto k : {TaskKind::MathNumeric, TaskKind::MathBoxed, TaskKind::MultipleChoice, TaskKind::Code,
                 TaskKind::Generic}) {
    CHECK(parse_task_kind(to_string(k)) == k);
  }
}

TEST_CASE("token counting uses whitespace") {
  CHECK(count_tokens("") == 0);
  CHECK(count_tokens("  a\tb\n c  ") == 3);
  CHECK(whitespace_tokens("x  y") == std::vector<std::string>{"x", "y"});
  TokenCounts a{3, 4};
  a += TokenCounts{1, 1};
  CHECK(a.total() == 9);
}

TEST_CASE("action counts") {
  ActionCounts c;
  c.add(ActionType::Eval);
  c.add(ActionType::Defer);
  c.add(ActionType::Defer);
  CHECK(c == ActionCounts{1, 0, 2});
  CHECK(c.total() == 3);
}
