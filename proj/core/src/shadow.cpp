#include "sbound/shadow.hpp"

#include <cassert>
#include <cstring>

namespace sbound {

void RegionConfig::check() const {
  auto aligned8 = [](uint64_t v) { return (v & 7) == 0; };
  if (!aligned8(heapBase) || !aligned8(heapSize) || !aligned8(shadowOffset))
    throw ConfigError("heapBase, heapSize, shadowOffset must be 8-aligned");
  if (maxAlloc > (8ULL << 30))
    throw ConfigError("maxAlloc exceeds 8 GiB");
  if (reservedBytes % 8 != 0)
    throw ConfigError("reservedBytes must be a multiple of 8");
  if (heapSize == 0)
    throw ConfigError("empty heap");

  // Shadow must not overlap the heap (including the decoy page after it),
  // the stack, globals, or code.
  Addr sb = shadowBase(), se = shadowBase() + heapSize;
  auto overlaps = [&](Addr lo, Addr hi) { return lo < se && sb < hi; };
  if (overlaps(heapBase, heapEnd() + decoySize))
    throw ConfigError("shadow region overlaps heap");
  if (overlaps(stackBase - (1ULL << 32), stackBase))
    throw ConfigError("shadow region overlaps stack");
  if (overlaps(globalBase, globalBase + (1ULL << 32)))
    throw ConfigError("shadow region overlaps globals");
  if (overlaps(codeBase, codeBase + (1ULL << 20)))
    throw ConfigError("shadow region overlaps code");
}

//===----------------------------------------------------------------------===//
// SparseMemory
//===----------------------------------------------------------------------===//

SparseMemory::Page *SparseMemory::pageFor(Addr a, bool create) const {
  uint64_t index = a / kPageBytes;
  if (index == cachedIndex_)
    return cachedPage_;
  auto it = pages_.find(index);
  if (it == pages_.end()) {
    if (!create)
      return nullptr;
    it = pages_.emplace(index, std::make_unique<Page>()).first;
  }
  cachedIndex_ = index;
  cachedPage_ = it->second.get();
  return cachedPage_;
}

uint8_t SparseMemory::load8(Addr a) const {
  const Page *p = pageFor(a, false);
  return p ? p->bytes[a % kPageBytes] : 0;
}

void SparseMemory::store8(Addr a, uint8_t v) {
  if (v == 0 && !pageFor(a, false))
    return;
  pageFor(a, true)->bytes[a % kPageBytes] = v;
}

uint64_t SparseMemory::load64(Addr a) const {
  assert((a & 7) == 0);
  const Page *p = pageFor(a, false);
  if (!p)
    return 0;
  uint64_t v;
  std::memcpy(&v, p->bytes.data() + a % kPageBytes, 8);
  return v;
}

void SparseMemory::store64(Addr a, uint64_t v) {
  assert((a & 7) == 0);
  if (v == 0 && !pageFor(a, false))
    return;
  std::memcpy(pageFor(a, true)->bytes.data() + a % kPageBytes, &v, 8);
}

uint64_t SparseMemory::loadScalar(Addr a, unsigned bytes) const {
  uint64_t v = 0;
  for (unsigned i = 0; i < bytes; ++i)
    v |= uint64_t(load8(a + i)) << (8 * i);
  return v;
}

void SparseMemory::storeScalar(Addr a, unsigned bytes, uint64_t v) {
  for (unsigned i = 0; i < bytes; ++i)
    store8(a + i, uint8_t(v >> (8 * i)));
}

void SparseMemory::fill(Addr a, uint64_t len, uint8_t byte) {
  while (len > 0) {
    uint64_t index = a / kPageBytes;
    uint64_t offset = a % kPageBytes;
    uint64_t n = std::min(len, kPageBytes - offset);
    if (byte == 0) {
      auto it = pages_.find(index);
      if (it == pages_.end()) {
        a += n;
        len -= n;
        continue;
      }
      std::memset(it->second->bytes.data() + offset, 0, n);
      if (n == kPageBytes || offset == 0) {
        // whole-page zero fill common for shadow poisoning
        bool allZero = true;
        for (uint8_t b : it->second->bytes)
          if (b) {
            allZero = false;
            break;
          }
        if (allZero) {
          if (cachedIndex_ == index) {
            cachedIndex_ = ~0ULL;
            cachedPage_ = nullptr;
          }
          pages_.erase(it);
        }
      }
    } else {
      std::memset(pageFor(a, true)->bytes.data() + offset, byte, n);
    }
    a += n;
    len -= n;
  }
}

void SparseMemory::copy(Addr dst, Addr src, uint64_t len) {
  // Byte-by-byte with memmove semantics.
  if (dst == src || len == 0)
    return;
  if (dst < src) {
    for (uint64_t i = 0; i < len; ++i)
      store8(dst + i, load8(src + i));
  } else {
    for (uint64_t i = len; i > 0; --i)
      store8(dst + i - 1, load8(src + i - 1));
  }
}

void SparseMemory::forEachWord(
    Addr a, uint64_t len, const std::function<void(Addr, uint64_t &)> &fn) {
  assert((a & 7) == 0 && (len & 7) == 0);
  Addr end = a + len;
  while (a < end) {
    Page *p = pageFor(a, true);
    uint64_t offset = a % kPageBytes;
    uint64_t n = std::min(end - a, kPageBytes - offset);
    for (uint64_t o = 0; o < n; o += 8) {
      uint64_t *slot = reinterpret_cast<uint64_t *>(p->bytes.data() + offset + o);
      fn(a + o, *slot);
    }
    a += n;
  }
}

//===----------------------------------------------------------------------===//
// Allocator policies
//===----------------------------------------------------------------------===//

namespace {

class BumpAllocator final : public AllocatorPolicy {
public:
  explicit BumpAllocator(const RegionConfig &cfg)
      : base_(cfg.heapBase), end_(cfg.heapEnd()), cursor_(cfg.heapBase) {}

  Addr acquire(uint64_t usable) override {
    if (cursor_ + usable > end_ || cursor_ + usable < cursor_)
      return 0;
    Addr r = cursor_;
    cursor_ += usable;
    return r;
  }
  void release(Addr, uint64_t) override {} // one-time allocation, no reuse
  const char *name() const override { return "bump"; }

private:
  Addr base_, end_, cursor_;
};

class FreeListAllocator final : public AllocatorPolicy {
public:
  explicit FreeListAllocator(const RegionConfig &cfg)
      : end_(cfg.heapEnd()), cursor_(cfg.heapBase) {}

  Addr acquire(uint64_t usable) override {
    auto it = freeLists_.find(usable);
    if (it != freeLists_.end() && !it->second.empty()) {
      Addr r = it->second.back();
      it->second.pop_back();
      return r;
    }
    if (cursor_ + usable > end_ || cursor_ + usable < cursor_)
      return 0;
    Addr r = cursor_;
    cursor_ += usable;
    return r;
  }

  void release(Addr begin, uint64_t usable) override {
    freeLists_[usable].push_back(begin);
  }

  const char *name() const override { return "freelist"; }

private:
  Addr end_, cursor_;
  std::map<uint64_t, std::vector<Addr>> freeLists_; // exact-fit size classes
};

} // namespace

std::unique_ptr<AllocatorPolicy> makeBumpAllocator(const RegionConfig &cfg) {
  return std::make_unique<BumpAllocator>(cfg);
}

std::unique_ptr<AllocatorPolicy> makeFreeListAllocator(const RegionConfig &cfg) {
  return std::make_unique<FreeListAllocator>(cfg);
}

std::unique_ptr<AllocatorPolicy> makeAllocator(const std::string &name,
                                               const RegionConfig &cfg) {
  if (name == "bump")
    return makeBumpAllocator(cfg);
  if (name == "freelist")
    return makeFreeListAllocator(cfg);
  throw ConfigError("unknown allocator policy: " + name);
}

//===----------------------------------------------------------------------===//
// ShadowHeap
//===----------------------------------------------------------------------===//

const char *verdictName(VerdictKind k) {
  switch (k) {
  case VerdictKind::InBounds: return "inBounds";
  case VerdictKind::OobUnderflow: return "oobUnderflow";
  case VerdictKind::OobOverflow: return "oobOverflow";
  case VerdictKind::NotHeap: return "notHeap";
  }
  return "?";
}

ShadowHeap::ShadowHeap(const RegionConfig &cfg, SparseMemory &mem,
                       std::unique_ptr<AllocatorPolicy> policy)
    : cfg_(cfg), mem_(mem), policy_(std::move(policy)) {
  cfg_.check();
}

AllocResult ShadowHeap::allocate(uint64_t size) {
  if (size == 0)
    return {0, AllocError::InvalidSize};
  if (size > cfg_.maxAlloc)
    return {0, AllocError::SizeTooLarge};
  uint64_t usable = ((size + 7) & ~7ULL) + cfg_.reservedBytes;
  Addr begin = policy_->acquire(usable);
  if (begin == 0)
    return {0, AllocError::OutOfMemory};
  assert((begin & 7) == 0 && begin >= cfg_.heapBase &&
         begin + usable <= cfg_.heapEnd());

  Chunk c{begin, size, usable, nextSeq_++};

  // Reclaim any freed-range bookkeeping this chunk now covers.
  for (auto it = freed_.lower_bound(begin); it != freed_.end();) {
    if (it->second.begin >= begin + usable)
      break;
    it = freed_.erase(it);
  }
  // (earlier freed chunk overlapping from below)
  if (auto it = freed_.lower_bound(begin); it != freed_.begin()) {
    auto prev = std::prev(it);
    if (prev->second.end() > begin)
      freed_.erase(prev);
  }

  live_.emplace(begin, c);
  writeShadowRange(c);
  // Reserved tail is defined as zero; rounding slack keeps prior contents.
  mem_.fill(c.reservedTailBegin(), c.end() - c.reservedTailBegin(), 0);

  ++stats_.allocs;
  stats_.bytesAllocated += size;
  return {begin, AllocError::None};
}

FreeResult ShadowHeap::release(Addr chunkBegin) {
  auto it = live_.find(chunkBegin);
  if (it == live_.end())
    return FreeResult::InvalidFree;
  Chunk c = it->second;
  live_.erase(it);
  poisonShadowRange(c);
  freed_.emplace(c.begin, c);
  policy_->release(c.begin, c.usable);
  ++stats_.frees;
  return FreeResult::Ok;
}

void ShadowHeap::writeShadowRange(const Chunk &c) {
  // Per Fig.2: for granule g, low = (g - begin)/8, high = (end - g)/8.
  uint64_t low = 0;
  uint64_t high = c.usable >> 3;
  mem_.forEachWord(c.begin + cfg_.shadowOffset, c.usable,
                   [&](Addr, uint64_t &slot) {
                     slot = (high << 32) | low;
                     ++low;
                     --high;
                   });
  stats_.shadowBytesTouched += c.usable;
}

void ShadowHeap::poisonShadowRange(const Chunk &c) {
  // Zero words decode to beg == end == granule: every later check fails.
  mem_.fill(c.begin + cfg_.shadowOffset, c.usable, 0);
  stats_.shadowBytesTouched += c.usable;
}

CheckVerdict ShadowHeap::extractBounds(Addr src) const {
  CheckVerdict v;
  if (!cfg_.inHeap(src)) {
    v.kind = VerdictKind::NotHeap;
    return v;
  }
  Addr align = src & ~7ULL;
  uint64_t pack = mem_.load64(align + cfg_.shadowOffset);
  v.beg = align - ((pack & 0xffffffffULL) << 3);
  v.end = align + ((pack >> 32) << 3);
  return v;
}

CheckVerdict ShadowHeap::boundCheck(Addr old, Addr res) const {
  CheckVerdict v = extractBounds(old);
  v.res = res;
  if (v.kind == VerdictKind::NotHeap)
    return v;
  if (res < v.beg)
    v.kind = VerdictKind::OobUnderflow;
  else if (res >= v.end)
    v.kind = VerdictKind::OobOverflow;
  return v;
}

CheckVerdict ShadowHeap::rangeCheck(Addr p, uint64_t len) const {
  CheckVerdict v = extractBounds(p);
  v.res = p + len;
  if (v.kind == VerdictKind::NotHeap)
    return v;
  if (p < v.beg)
    v.kind = VerdictKind::OobUnderflow;
  else if (p >= v.end || (len > 0 && p + len > v.end))
    v.kind = VerdictKind::OobOverflow;
  return v;
}

const Chunk *ShadowHeap::liveChunkContaining(Addr a) const {
  auto it = live_.upper_bound(a);
  if (it == live_.begin())
    return nullptr;
  --it;
  return a < it->second.end() ? &it->second : nullptr;
}

const Chunk *ShadowHeap::liveChunkAt(Addr begin) const {
  auto it = live_.find(begin);
  return it == live_.end() ? nullptr : &it->second;
}

bool ShadowHeap::inFreedRegion(Addr a) const {
  auto it = freed_.upper_bound(a);
  if (it == freed_.begin())
    return false;
  --it;
  return a < it->second.end();
}

void ShadowHeap::dumpShadow(std::ostream &os) const {
  for (const auto &[begin, c] : live_) {
    for (Addr g = c.begin; g < c.end(); g += 8) {
      uint64_t pack = mem_.load64(g + cfg_.shadowOffset);
      os << "{\"granule\": " << g << ", \"low\": " << (pack & 0xffffffffULL)
         << ", \"high\": " << (pack >> 32) << "}\n";
    }
  }
}

void ShadowHeap::dumpChunks(std::ostream &os) const {
  for (const auto &[begin, c] : live_)
    os << "{\"begin\": " << begin << ", \"requested\": " << c.requested
       << ", \"usable\": " << c.usable << ", \"state\": \"live\"}\n";
  for (const auto &[begin, c] : freed_)
    os << "{\"begin\": " << begin << ", \"requested\": " << c.requested
       << ", \"usable\": " << c.usable << ", \"state\": \"freed\"}\n";
}

} // namespace sbound
