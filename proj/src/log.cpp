#include "efbg/log.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace efbg::log {

namespace {

Level from_env() {
  const char* v = std::getenv("EFBG_LOG");
  if (v == nullptr) return Level::Warn;
  const std::string s(v);
  if (s == "quiet") return Level::Quiet;
  if (s == "info") return Level::Info;
  if (s == "debug") return Level::Debug;
  return Level::Warn;
}

std::atomic<int>& current() {
  static std::atomic<int> l{static_cast<int>(from_env())};
  return l;
}

const char* tag(Level l) {
  switch (l) {
    case Level::Warn: return "warn";
    case Level::Info: return "info";
    case Level::Debug: return "debug";
    default: return "";
  }
}

}  // namespace

Level level() { return static_cast<Level>(current().load()); }

void set_level(Level l) { current().store(static_cast<int>(l)); }

void write(Level l, std::string_view message) {
  if (static_cast<int>(l) > current().load() || l == Level::Quiet) return;
  std::clog << "[" << tag(l) << "] " << message << '\n';
}

}  // namespace efbg::log
