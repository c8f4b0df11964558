#include <stdlib.h>

#include "doctest.h"

#include "anchor/config.hpp"
#include "anchor/error.hpp"

using namespace anchor;

TEST_SUITE("config") {

TEST_CASE("sections, comments and typed lookups") {
  const auto c = Config::parse(
      "top = 1\n"
      "# comment\n"
      "[broker]\n"
      "queue_capacity = 16   # trailing\n"
      "ratio = 0.25\n"
      "flag = yes\n"
      "channels = a, b ,, c\n"
      "[project.alpha]\n"
      "theta = 0.5\n");
  CHECK(c.get_int("", "top", 0) == 1);
  CHECK(c.get_int("broker", "queue_capacity", 0) == 16);
  CHECK(c.get_double("broker", "ratio", 0) == doctest::Approx(0.25));
  CHECK(c.get_bool("broker", "flag", false));
  CHECK(c.get_list("broker", "channels") == std::vector<std::string>{"a", "b", "c"});
  CHECK(c.sections_with_prefix("project.") == std::vector<std::string>{"alpha"});
  CHECK(c.get_string("broker", "missing", "fallback") == "fallback");
}

TEST_CASE("malformed input reports the line") {
  try {
    Config::parse("[ok]\nno equals sign here\n");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigError);
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(Config::parse("[a]\nx = 1\nx = 2\n"), Error);
  CHECK_THROWS_AS(Config::parse("[a]\nx = notanumber\n").get_int("a", "x", 0), Error);
}

TEST_CASE("environment overrides") {
  const auto c = Config::parse("[broker]\nqueue_capacity = 16\n");
  CHECK(Config::env_name("project.alpha", "fail-on") == "ANCHOR_PROJECT_ALPHA_FAIL_ON");
  ::setenv("ANCHOR_BROKER_QUEUE_CAPACITY", "99", 1);
  CHECK(c.get_int("broker", "queue_capacity", 0) == 99);
  ::unsetenv("ANCHOR_BROKER_QUEUE_CAPACITY");
  CHECK(c.get_int("broker", "queue_capacity", 0) == 16);
}

}  // TEST_SUITE
