//===- optimize.hpp - the five check-elimination passes --------------------===//
#pragma once

#include "sbound/analysis.hpp"
#include "sbound/instrument.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbound {

inline const std::vector<std::string> kPassOrder = {
    "rt-elim", "rdt-elim", "pattern", "dir", "merge"};

struct PassConfig {
  std::set<std::string> enabled{kPassOrder.begin(), kPassOrder.end()};
  uint64_t reservedBytes = 16; // must match the runtime's n

  static PassConfig none() {
    PassConfig c;
    c.enabled.clear();
    return c;
  }
  static PassConfig all(uint64_t n = 16) {
    PassConfig c;
    c.reservedBytes = n;
    return c;
  }
  static PassConfig allBut(const std::string &pass, uint64_t n = 16) {
    PassConfig c = all(n);
    c.enabled.erase(pass);
    return c;
  }
};

class ConfigMismatchError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct LogEntry {
  uint32_t site = 0;
  std::string pass;
  std::string action; // removeSite | dropUnderflow | dropOverflow | mergeExtraction
  nlohmann::json why;
  std::string mergeKey; // "<func>/<source>" for mergeExtraction
};

using EliminationLog = std::vector<LogEntry>;

nlohmann::json logToJson(const EliminationLog &log);

struct PatternFact {
  enum class Kind : uint8_t { ConstantArrayArg, LengthPtrAssoc } kind;
  // ConstantArrayArg
  std::string function;
  uint32_t paramIndex = 0;
  uint64_t boundBytes = 0;
  // LengthPtrAssoc
  std::string structName;
  uint32_t ptrFieldIndex = 0;
  uint32_t lenFieldIndex = 0;
  uint64_t elemSize = 0;
};

std::vector<PatternFact> minePatterns(const Program &p);

struct PassStats {
  std::string pass;
  StaticCheckStats before;
  StaticCheckStats after;
};

struct PipelineResult {
  EliminationLog log;
  std::vector<PassStats> passStats;
  std::vector<PatternFact> patternFacts;
};

/// Runs the enabled passes in the fixed order rt-elim, rdt-elim, pattern,
/// dir, merge. Throws ConfigMismatchError when cfg.reservedBytes differs
/// from the runtime's reserved-space configuration.
PipelineResult runPipeline(InstrumentedProgram &ip, const PassConfig &cfg,
                           uint64_t runtimeReservedBytes);

/// Re-applies a recorded log to a freshly instrumented baseline; the result
/// is bit-identical to the program the log was recorded from.
void replayLog(InstrumentedProgram &ip, const EliminationLog &log);

} // namespace sbound
