//===- shadow.hpp - simulated heap, shadow metadata, boundary checks -------===//
//
// One sparse 64-bit address space holds the heap and, at a fixed offset, the
// shadow region. Every aligned 8-byte granule of a live chunk carries a
// packed word: low 32 bits are the distance to the chunk begin and high 32
// bits the distance to the chunk end, both in granule units. boundCheck reads
// exactly that word and nothing else; the chunk table exists for allocation
// bookkeeping and for oracle-style differential tests.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace sbound {

using Addr = uint64_t;

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RegionConfig {
  Addr heapBase = 0x5000'0000'0000ULL;
  uint64_t heapSize = 1ULL << 30;
  uint64_t shadowOffset = 0x0400'0000'0000ULL; // 4 TiB gap
  uint64_t reservedBytes = 16;                 // per-chunk slack n
  uint64_t maxAlloc = 8ULL << 30;              // single allocation cap

  Addr stackBase = 0x7000'0000'0000ULL; // frames grow downward from here
  uint64_t stackFrameBytes = 64 << 10;
  Addr globalBase = 0x1000'0000'0000ULL;
  Addr codeBase = 0x2000'0000'0000ULL; // synthetic function addresses
  uint64_t decoySize = 64 << 10;       // mapped region just past the heap

  Addr shadowBase() const { return heapBase + shadowOffset; }
  Addr heapEnd() const { return heapBase + heapSize; }
  Addr decoyBase() const { return heapEnd(); }

  bool inHeap(Addr a) const { return a >= heapBase && a < heapEnd(); }
  bool inShadow(Addr a) const {
    return a >= shadowBase() && a < shadowBase() + heapSize;
  }
  bool inDecoy(Addr a) const {
    return a >= decoyBase() && a < decoyBase() + decoySize;
  }

  /// Throws ConfigError if alignment or region-disjointness is violated.
  void check() const;
};

/// Paged sparse byte store over the full 64-bit space. Pages filled with
/// zeros are dropped, so poisoning shadow memory of freed chunks costs
/// nothing in residency.
class SparseMemory {
public:
  static constexpr uint64_t kPageBytes = 4096;

  uint8_t load8(Addr a) const;
  void store8(Addr a, uint8_t v);
  uint64_t load64(Addr a) const; // a must be 8-aligned
  void store64(Addr a, uint64_t v);
  uint64_t loadScalar(Addr a, unsigned bytes) const;
  void storeScalar(Addr a, unsigned bytes, uint64_t v);

  void fill(Addr a, uint64_t len, uint8_t byte);
  void copy(Addr dst, Addr src, uint64_t len);

  /// Invokes fn(addr, slot) for each 8-byte slot in [a, a+len); creates pages.
  void forEachWord(Addr a, uint64_t len,
                   const std::function<void(Addr, uint64_t &)> &fn);

  size_t pagesAllocated() const { return pages_.size(); }

private:
  struct Page {
    std::array<uint8_t, kPageBytes> bytes{};
  };
  Page *pageFor(Addr a, bool create) const;
  void dropIfZero(Addr pageIndex);

  mutable std::unordered_map<uint64_t, std::unique_ptr<Page>> pages_;
  mutable uint64_t cachedIndex_ = ~0ULL;
  mutable Page *cachedPage_ = nullptr;
};

/// Placement policy behind the shadow heap. The shadow design is independent
/// of it; tests run the full suite under both implementations.
class AllocatorPolicy {
public:
  virtual ~AllocatorPolicy() = default;
  virtual Addr acquire(uint64_t usable) = 0; // 0 on exhaustion
  virtual void release(Addr begin, uint64_t usable) = 0;
  virtual const char *name() const = 0;
};

std::unique_ptr<AllocatorPolicy> makeBumpAllocator(const RegionConfig &cfg);
std::unique_ptr<AllocatorPolicy> makeFreeListAllocator(const RegionConfig &cfg);
std::unique_ptr<AllocatorPolicy> makeAllocator(const std::string &name,
                                               const RegionConfig &cfg);

enum class VerdictKind : uint8_t { InBounds, OobUnderflow, OobOverflow, NotHeap };

const char *verdictName(VerdictKind k);

struct CheckVerdict {
  VerdictKind kind = VerdictKind::InBounds;
  Addr res = 0;
  Addr beg = 0;
  Addr end = 0;
  bool ok() const {
    return kind == VerdictKind::InBounds || kind == VerdictKind::NotHeap;
  }
};

struct Chunk {
  Addr begin = 0;
  uint64_t requested = 0;
  uint64_t usable = 0; // roundUp8(requested) + reservedBytes
  uint32_t seq = 0;    // allocation sequence number

  Addr end() const { return begin + usable; }
  Addr reservedTailBegin() const { return begin + ((requested + 7) & ~7ULL); }
  bool inReservedTail(Addr a) const {
    return a >= reservedTailBegin() && a < end();
  }
};

enum class AllocError : uint8_t { None, SizeTooLarge, OutOfMemory, InvalidSize };
enum class FreeResult : uint8_t { Ok, InvalidFree };

struct AllocResult {
  Addr begin = 0;
  AllocError error = AllocError::None;
  bool ok() const { return error == AllocError::None; }
};

struct ShadowStats {
  uint64_t allocs = 0;
  uint64_t frees = 0;
  uint64_t bytesAllocated = 0;    // requested bytes
  uint64_t shadowBytesTouched = 0;
};

class ShadowHeap {
public:
  ShadowHeap(const RegionConfig &cfg, SparseMemory &mem,
             std::unique_ptr<AllocatorPolicy> policy);

  AllocResult allocate(uint64_t size);
  FreeResult release(Addr chunkBegin);

  /// Listing-style boundary check: verdict for deriving `res` from `old`.
  CheckVerdict boundCheck(Addr old, Addr res) const;

  /// Intrinsic argument check: the whole window [p, p+len) must be in
  /// bounds; len 0 only requires p itself to be in range.
  CheckVerdict rangeCheck(Addr p, uint64_t len) const;

  /// Extraction stage: decode (beg, end) for a base pointer. NotHeap sources
  /// yield a verdict with kind NotHeap; checks consuming it are no-ops.
  CheckVerdict extractBounds(Addr src) const;

  bool isHeapAddr(Addr a) const { return cfg_.inHeap(a); }
  const Chunk *liveChunkContaining(Addr a) const;
  const Chunk *liveChunkAt(Addr begin) const;
  bool inFreedRegion(Addr a) const;
  const std::map<Addr, Chunk> &liveChunks() const { return live_; }

  const ShadowStats &stats() const { return stats_; }
  const RegionConfig &config() const { return cfg_; }
  const char *policyName() const { return policy_->name(); }

  /// Debug dumps: JSON lines sorted by granule / chunk begin.
  void dumpShadow(std::ostream &os) const;
  void dumpChunks(std::ostream &os) const;

private:
  void writeShadowRange(const Chunk &c);
  void poisonShadowRange(const Chunk &c);

  RegionConfig cfg_;
  SparseMemory &mem_;
  std::unique_ptr<AllocatorPolicy> policy_;
  std::map<Addr, Chunk> live_;
  std::map<Addr, Chunk> freed_; // coalesced view is unnecessary; keyed by begin
  uint32_t nextSeq_ = 1;
  ShadowStats stats_;
};

} // namespace sbound
