//===- instrument.hpp - check insertion at pointer-arithmetic sites --------===//
#pragma once

#include "sbound/ir.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sbound {

enum class SiteOrigin : uint8_t { Gep, FieldGep, Cast, Unknown };

struct SiteRecord {
  uint32_t id = 0;
  uint32_t func = 0;
  SiteOrigin origin = SiteOrigin::Unknown;
  bool active = true;
  std::string eliminatedBy; // pass name once inactive
};

/// A program whose pointer arithmetic carries sb.extract / sb.check
/// pseudo-instructions, plus the registry of every site ever created.
/// The instructions are the single source of truth; the registry remembers
/// what optimization removed.
struct InstrumentedProgram {
  Program prog;
  std::vector<SiteRecord> sites;

  SiteRecord *findSite(uint32_t id) {
    return id < sites.size() ? &sites[id] : nullptr;
  }
};

/// Inserts a boundary check at every gep, fieldgep, and cast whose target
/// pointee is sized. Each site gets a private extraction binding right
/// before the site instruction and a check right after it.
InstrumentedProgram instrument(const Program &p);

/// Adopts an already-instrumented program (e.g. re-parsed text): assigns
/// site ids in scan order and builds the registry.
InstrumentedProgram adoptInstrumented(Program p);

struct StaticCheckStats {
  uint64_t sites = 0;       // ever created
  uint64_t activeSites = 0; // checks still present
  uint64_t activeHalves = 0;
  uint64_t extractions = 0;
};

StaticCheckStats countStaticChecks(const InstrumentedProgram &ip);

/// Removes every sb.extract / sb.check, yielding the plain program.
Program stripChecks(const Program &p);

/// Rebuilds valueDefs from instruction results after structural edits.
void reindexFunction(Function &f);

/// True when some instruction in p is an sb.* pseudo-instruction.
bool hasChecks(const Program &p);

} // namespace sbound
