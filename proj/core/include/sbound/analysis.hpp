//===- analysis.hpp - static analyses feeding the optimizer ----------------===//
#pragma once

#include "sbound/ir.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace sbound {

//===----------------------------------------------------------------------===//
// Dominance
//===----------------------------------------------------------------------===//

struct DomInfo {
  std::vector<uint32_t> idom;  // per block; entry maps to itself
  std::vector<uint32_t> ipdom; // per block; kVirtualExit for exit blocks
  std::vector<std::vector<uint32_t>> succs;
  std::vector<std::vector<uint32_t>> preds;
  std::vector<bool> reachable;

  static constexpr uint32_t kVirtualExit = 0xfffffffeu;

  bool dominates(uint32_t a, uint32_t b) const;
  bool postDominates(uint32_t a, uint32_t b) const;
  /// a strictly before b in execution order on every path reaching b.
  bool instrDominates(InstrRef a, InstrRef b) const;
};

DomInfo computeDom(const Function &f);

//===----------------------------------------------------------------------===//
// Integer ranges (flow-insensitive per SSA value, widening for loops)
//===----------------------------------------------------------------------===//

struct RangeInterval {
  int64_t lo = 0;
  int64_t hi = 0;
  bool negInf = true;
  bool posInf = true;

  static RangeInterval top() { return {}; }
  static RangeInterval constant(int64_t c) { return {c, c, false, false}; }
  static RangeInterval of(int64_t lo, int64_t hi) { return {lo, hi, false, false}; }

  bool isTop() const { return negInf && posInf; }
  bool contains(int64_t v) const {
    return (negInf || v >= lo) && (posInf || v <= hi);
  }
  bool subsetOf(const RangeInterval &o) const {
    bool loOk = o.negInf || (!negInf && lo >= o.lo);
    bool hiOk = o.posInf || (!posInf && hi <= o.hi);
    return loOk && hiOk;
  }
  bool operator==(const RangeInterval &o) const {
    return negInf == o.negInf && posInf == o.posInf &&
           (negInf || lo == o.lo) && (posInf || hi == o.hi);
  }

  RangeInterval join(const RangeInterval &o) const;
  RangeInterval add(const RangeInterval &o, bool &overflow) const;
  RangeInterval sub(const RangeInterval &o, bool &overflow) const;
  RangeInterval mul(const RangeInterval &o, bool &overflow) const;
  RangeInterval scale(int64_t k, bool &overflow) const;
  RangeInterval offset(int64_t k, bool &overflow) const;
};

struct ValueRange {
  RangeInterval interval;
  bool mayWrap = false; // arithmetic on this value may exceed 64-bit range
};

struct RangeInfo {
  std::vector<ValueRange> values; // indexed by ValueId

  const RangeInterval &interval(ValueId v) const { return values[v].interval; }
  bool mayWrap(ValueId v) const { return values[v].mayWrap; }
  /// Range of an operand: immediates are exact constants.
  RangeInterval of(const Operand &op) const;
  bool operandMayWrap(const Operand &op) const;
};

RangeInfo computeRanges(const Function &f, const Program &p);

//===----------------------------------------------------------------------===//
// Escape facts
//===----------------------------------------------------------------------===//

enum EscapeReason : uint8_t {
  kEscPassedToCall = 1,
  kEscStoredToMemory = 2,
  kEscReturned = 4,
  kEscBaseOfCheck = 8,
  kEscViaPhi = 16,
};

struct EscapeFact {
  bool escapes = false;
  uint8_t reasons = 0;
};

/// checkBase[v] marks values currently used as the source of an active
/// extraction (base pointer of live boundary checks). Re-run as checks are
/// deleted; escape-ness only shrinks.
std::vector<EscapeFact> computeEscapes(const Function &f,
                                       const std::vector<bool> &checkBase);

//===----------------------------------------------------------------------===//
// Allocation sizes
//===----------------------------------------------------------------------===//

enum class SizeProvenance : uint8_t {
  Unknown,
  LocalHeapAlloc,
  StackAlloc,
  GlobalArray,
  CheckedCast,
  StructArrayField,
  Derived,
};

struct AllocSizeFact {
  bool known = false;
  bool lowerBound = false; // true: at least `bytes` are valid, maybe more
  uint64_t bytes = 0;
  SizeProvenance provenance = SizeProvenance::Unknown;
};

/// activeCastCheck[v] marks cast results whose boundary check is still
/// active; only those justify type-derived sizes.
std::vector<AllocSizeFact>
computeAllocSizes(const Program &p, const Function &f,
                  const std::vector<bool> &activeCastCheck);

//===----------------------------------------------------------------------===//
// Whole-program call facts
//===----------------------------------------------------------------------===//

struct CallSiteRef {
  uint32_t function; // caller index
  InstrRef at;
};

struct CallFacts {
  std::set<std::string> addressTaken;
  std::map<std::string, std::vector<CallSiteRef>> callSites;
  /// Functions that may (transitively) free heap memory; indirect calls are
  /// assumed to reach free.
  std::set<std::string> mayFree;

  bool calleeMayFree(const Instr &call) const;
};

CallFacts computeCallFacts(const Program &p);

} // namespace sbound
