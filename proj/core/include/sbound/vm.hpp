//===- vm.hpp - deterministic interpreter over the simulated heap ----------===//
#pragma once

#include "sbound/ir.hpp"
#include "sbound/shadow.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace sbound {

struct VmConfig {
  RegionConfig region;
  uint64_t stepBudget = 10'000'000;
  std::string allocator = "freelist";
  bool collectValueRanges = false;
  std::ostream *traceOut = nullptr; // JSON lines per executed check / event
};

enum class Outcome : uint8_t { Ok, OD, BR, TF, Fault, BudgetExceeded };

const char *outcomeName(Outcome o);
bool outcomeFromName(const std::string &name, Outcome &out);

enum class FaultKind : uint8_t {
  None,
  MemAccess,    // unmapped or null access
  PointerWrap,  // pointer arithmetic wrapped the address space
  InvalidFree,  // free of a non-live-chunk address
  StackOverflow,
  BadIndirect,  // indirect call to a non-function value
  AllocMisuse,  // placeholder for allocator misuse beyond free
};

struct DynamicStats {
  uint64_t checksExecuted = 0;
  uint64_t halfChecksExecuted = 0;
  uint64_t extractionsExecuted = 0;
  uint64_t allocs = 0;
  uint64_t frees = 0;
  uint64_t bytesAllocated = 0;
  uint64_t shadowBytesTouched = 0;
  uint64_t steps = 0;
};

struct OobEvent {
  Addr addr = 0;
  enum class Where : uint8_t {
    OwnSlack,      // within the owning chunk's rounding/reserved slack
    OtherLive,     // overlapped another live chunk
    Freed,         // overlapped a freed region
    NonHeapMapped, // accessible non-heap mapping
    Unmapped,
  } where = Where::OwnSlack;
  std::string pc;
};

struct RunReport {
  Outcome outcome = Outcome::Ok;

  uint32_t odSite = 0;
  std::string odVerdict;
  std::string odPc;

  std::vector<Addr> reservedAccesses; // addresses inside reserved tails
  std::string tfPc;

  FaultKind faultKind = FaultKind::None;
  std::string faultReason;
  std::string faultPc;

  int64_t returnValue = 0;
  std::vector<int64_t> outputs;
  std::vector<OobEvent> oobEvents;
  DynamicStats stats;

  // per (function, value): observed signed min/max, when enabled
  std::map<std::pair<uint32_t, uint32_t>, std::pair<int64_t, int64_t>>
      observedRanges;

  nlohmann::ordered_json toJson(bool includeStats = true) const;
};

/// Executes `main` with the given input vector. Deterministic for a fixed
/// (program, input, config, allocator policy).
RunReport run(const Program &p, const std::vector<int64_t> &input,
              const VmConfig &cfg);

enum class Consequence : uint8_t { S1, S2, S3, NotApplicable };
const char *consequenceName(Consequence c);

/// Table-1 style classification of the recorded out-of-bounds activity.
Consequence classifyConsequence(const RunReport &r);

} // namespace sbound
