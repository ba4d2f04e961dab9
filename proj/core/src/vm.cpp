#include "sbound/vm.hpp"

#include <cassert>
#include <cstring>

namespace sbound {

const char *outcomeName(Outcome o) {
  switch (o) {
  case Outcome::Ok: return "ok";
  case Outcome::OD: return "OD";
  case Outcome::BR: return "BR";
  case Outcome::TF: return "TF";
  case Outcome::Fault: return "fault";
  case Outcome::BudgetExceeded: return "budgetExceeded";
  }
  return "?";
}

bool outcomeFromName(const std::string &name, Outcome &out) {
  for (Outcome o : {Outcome::Ok, Outcome::OD, Outcome::BR, Outcome::TF,
                    Outcome::Fault, Outcome::BudgetExceeded})
    if (name == outcomeName(o)) {
      out = o;
      return true;
    }
  return false;
}

const char *consequenceName(Consequence c) {
  switch (c) {
  case Consequence::S1: return "S1";
  case Consequence::S2: return "S2";
  case Consequence::S3: return "S3";
  case Consequence::NotApplicable: return "notApplicable";
  }
  return "?";
}

Consequence classifyConsequence(const RunReport &r) {
  bool s3 = false, s2 = false;
  for (const auto &e : r.oobEvents) {
    switch (e.where) {
    case OobEvent::Where::OtherLive:
    case OobEvent::Where::Freed:
    case OobEvent::Where::NonHeapMapped:
      s3 = true;
      break;
    case OobEvent::Where::OwnSlack:
      s2 = true;
      break;
    case OobEvent::Where::Unmapped:
      break;
    }
  }
  if (s3)
    return Consequence::S3;
  if (r.outcome == Outcome::Fault && r.faultKind == FaultKind::MemAccess)
    return Consequence::S1;
  if (s2 || r.outcome == Outcome::BR || !r.reservedAccesses.empty())
    return Consequence::S2;
  return Consequence::NotApplicable;
}

nlohmann::ordered_json RunReport::toJson(bool includeStats) const {
  nlohmann::ordered_json j;
  j["outcome"] = outcomeName(outcome);
  if (outcome == Outcome::OD) {
    j["site"] = odSite == UINT32_MAX ? nlohmann::ordered_json("intrinsic")
                                     : nlohmann::ordered_json(odSite);
    j["verdict"] = odVerdict;
    j["pc"] = odPc;
  }
  if (!reservedAccesses.empty())
    j["reservedAccesses"] = reservedAccesses;
  if (outcome == Outcome::TF)
    j["pc"] = tfPc;
  if (outcome == Outcome::Fault) {
    j["reason"] = faultReason;
    j["pc"] = faultPc;
  }
  j["return"] = returnValue;
  j["outputs"] = outputs;
  if (includeStats) {
    j["stats"] = {{"checksExecuted", stats.checksExecuted},
                  {"halfChecksExecuted", stats.halfChecksExecuted},
                  {"extractionsExecuted", stats.extractionsExecuted},
                  {"allocs", stats.allocs},
                  {"frees", stats.frees},
                  {"bytesAllocated", stats.bytesAllocated},
                  {"shadowBytesTouched", stats.shadowBytesTouched},
                  {"steps", stats.steps}};
  }
  return j;
}

namespace {

constexpr Addr kNullPageEnd = 4096;

int64_t sextTo64(uint64_t v, unsigned bits) {
  if (bits >= 64)
    return int64_t(v);
  uint64_t mask = (1ULL << bits) - 1;
  uint64_t x = v & mask;
  uint64_t sign = 1ULL << (bits - 1);
  return int64_t((x ^ sign) - sign);
}

uint64_t zextOf(uint64_t v, unsigned bits) {
  if (bits >= 64)
    return v;
  return v & ((1ULL << bits) - 1);
}

struct RegMeta {
  bool reserveZero = false; // value came from zero-filled reserved space
  bool hasProv = false;
  Addr provBegin = 0;
  uint32_t provSeq = 0;

  static RegMeta none() { return {}; }
};

struct BoundsVal {
  Addr beg = 0;
  Addr end = 0;
  bool heap = false;
};

struct Frame {
  uint32_t func = 0;
  uint32_t block = 0;
  uint32_t prevBlock = kNoBlock;
  uint32_t index = 0;
  std::vector<uint64_t> regs;
  std::vector<RegMeta> meta;
  std::vector<BoundsVal> bounds;
  Addr stackCursor = 0;
  Addr stackLimit = 0;
  ValueId retTo = kNoValue;
};

class Vm {
public:
  Vm(const Program &p, const std::vector<int64_t> &input, const VmConfig &cfg)
      : p_(p), cfg_(cfg), input_(input),
        heap_(cfg.region, mem_, makeAllocator(cfg.allocator, cfg.region)) {
    layoutGlobals();
  }

  RunReport run() {
    const Function *main = p_.findFunction("main");
    if (!main) {
      fault(FaultKind::AllocMisuse, "no main function", "-");
      finish();
      return std::move(report_);
    }
    pushFrame(uint32_t(p_.functionIndex("main")), kNoValue);
    Frame &f = frames_.back();
    for (uint32_t i = 0; i < main->params.size(); ++i) {
      f.regs[i] = i < input_.size() ? uint64_t(input_[i]) : 0;
      observe(f.func, i, int64_t(f.regs[i]));
    }
    while (!done_)
      step();
    finish();
    return std::move(report_);
  }

private:
  //===------------------------------------------------------------------===//
  // Setup
  //===------------------------------------------------------------------===//

  void layoutGlobals() {
    Addr cursor = cfg_.region.globalBase;
    for (const auto &g : p_.globals) {
      globalAddrs_[g.name] = cursor;
      uint64_t bytes = roundUp8(g.byteSize(p_));
      cursor += bytes == 0 ? 8 : bytes;
    }
    globalEnd_ = cursor;
    for (uint32_t i = 0; i < p_.functions.size(); ++i) {
      Addr a = cfg_.region.codeBase + 16 * (i + 1);
      funcAddrs_[p_.functions[i].name] = a;
      funcByAddr_[a] = i;
    }
  }

  //===------------------------------------------------------------------===//
  // Reporting helpers
  //===------------------------------------------------------------------===//

  std::string pcString() const {
    if (frames_.empty())
      return "-";
    const Frame &f = frames_.back();
    const Function &fn = p_.functions[f.func];
    return fn.name + "/" + fn.blocks[f.block].label + "/" +
           std::to_string(f.index);
  }

  void traceLine(const nlohmann::ordered_json &j) {
    if (cfg_.traceOut)
      *cfg_.traceOut << j.dump() << "\n";
  }

  void fault(FaultKind kind, const std::string &reason, const std::string &pc) {
    if (done_)
      return;
    report_.outcome = Outcome::Fault;
    report_.faultKind = kind;
    report_.faultReason = reason;
    report_.faultPc = pc;
    done_ = true;
  }

  void observe(uint32_t func, ValueId v, int64_t value) {
    if (!cfg_.collectValueRanges)
      return;
    auto key = std::make_pair(func, uint32_t(v));
    auto it = report_.observedRanges.find(key);
    if (it == report_.observedRanges.end())
      report_.observedRanges.emplace(key, std::make_pair(value, value));
    else {
      it->second.first = std::min(it->second.first, value);
      it->second.second = std::max(it->second.second, value);
    }
  }

  void finish() {
    report_.stats.steps = steps_;
    report_.stats.allocs = heap_.stats().allocs;
    report_.stats.frees = heap_.stats().frees;
    report_.stats.bytesAllocated = heap_.stats().bytesAllocated;
    report_.stats.shadowBytesTouched = heap_.stats().shadowBytesTouched;
    if (report_.outcome == Outcome::Ok && !report_.reservedAccesses.empty())
      report_.outcome = Outcome::BR;
  }

  //===------------------------------------------------------------------===//
  // Frames
  //===------------------------------------------------------------------===//

  void pushFrame(uint32_t func, ValueId retTo) {
    const Function &fn = p_.functions[func];
    Frame f;
    f.func = func;
    f.retTo = retTo;
    f.regs.assign(fn.numValues(), 0);
    f.meta.assign(fn.numValues(), RegMeta::none());
    f.bounds.assign(fn.numValues(), BoundsVal{});
    uint64_t frameBytes = cfg_.region.stackFrameBytes;
    Addr top = cfg_.region.stackBase - frameBytes * frames_.size();
    f.stackCursor = top - frameBytes;
    f.stackLimit = top;
    stackLow_ = std::min(stackLow_, f.stackCursor);
    frames_.push_back(std::move(f));
  }

  //===------------------------------------------------------------------===//
  // Memory mapping and access
  //===------------------------------------------------------------------===//

  enum class Region : uint8_t { Heap, FreedHeap, Stack, Global, Decoy, None };

  Region regionOf(Addr a) const {
    const RegionConfig &r = cfg_.region;
    if (r.inHeap(a)) {
      if (heap_.liveChunkContaining(a))
        return Region::Heap;
      if (heap_.inFreedRegion(a))
        return Region::FreedHeap;
      return Region::None;
    }
    if (r.inDecoy(a))
      return Region::Decoy;
    if (a >= stackLow_ && a < r.stackBase)
      return Region::Stack;
    if (a >= r.globalBase && a < globalEnd_)
      return Region::Global;
    return Region::None;
  }

  // Extent of the mapped object containing a (for window scanning).
  uint64_t mappedExtent(Addr a, Region reg) const {
    const RegionConfig &r = cfg_.region;
    switch (reg) {
    case Region::Heap:
      return heap_.liveChunkContaining(a)->end() - a;
    case Region::FreedHeap: {
      // freed chunks are contiguous runs; scan conservatively in 8s
      return 8 - (a & 7);
    }
    case Region::Stack:
      return r.stackBase - a;
    case Region::Global:
      return globalEnd_ - a;
    case Region::Decoy:
      return r.decoyBase() + r.decoySize - a;
    case Region::None:
      return 0;
    }
    return 0;
  }

  bool windowMapped(Addr a, uint64_t len, Addr &firstBad) const {
    uint64_t left = len == 0 ? 1 : len;
    Addr cur = a;
    while (left > 0) {
      Region reg = regionOf(cur);
      if (reg == Region::None) {
        firstBad = cur;
        return false;
      }
      uint64_t ext = mappedExtent(cur, reg);
      if (ext >= left)
        return true;
      cur += ext;
      left -= ext;
    }
    return true;
  }

  void recordReservedTouches(Addr a, uint64_t len) {
    // Address-based ("gdb script") detection: any byte of the window inside
    // a live chunk's reserved tail.
    Addr cur = a;
    uint64_t left = len == 0 ? 1 : len;
    while (left > 0) {
      const Chunk *c = heap_.liveChunkContaining(cur);
      if (!c) {
        ++cur;
        --left;
        continue;
      }
      Addr tail = c->reservedTailBegin();
      Addr lo = std::max(cur, tail);
      Addr hi = std::min(cur + left, c->end());
      if (lo < hi) {
        report_.reservedAccesses.push_back(lo);
        traceLine({{"event", "reservedAccess"},
                   {"pc", pcString()},
                   {"addr", lo},
                   {"chunk", c->begin}});
      }
      uint64_t adv = std::min<uint64_t>(left, c->end() - cur);
      cur += adv;
      left -= adv;
    }
  }

  void recordProvenanceEvents(Addr a, uint64_t len, const RegMeta &meta) {
    if (!meta.hasProv)
      return;
    const Chunk *own = heap_.liveChunkAt(meta.provBegin);
    if (!own || own->seq != meta.provSeq)
      return; // owning chunk gone: temporal errors are out of scope here
    Addr lo = a, hi = a + (len == 0 ? 1 : len);
    if (lo >= own->begin && hi <= own->begin + own->requested)
      return; // clean
    OobEvent ev;
    ev.addr = a;
    ev.pc = pcString();
    if (lo >= own->begin && hi <= own->end()) {
      ev.where = OobEvent::Where::OwnSlack;
    } else {
      // Severity scan across the window.
      bool other = false, freed = false, nonheap = false, unmapped = false;
      Addr cur = lo;
      while (cur < hi) {
        Region reg = regionOf(cur);
        const Chunk *c =
            reg == Region::Heap ? heap_.liveChunkContaining(cur) : nullptr;
        uint64_t ext = 1;
        switch (reg) {
        case Region::Heap:
          if (c->begin != own->begin)
            other = true;
          ext = c->end() - cur;
          break;
        case Region::FreedHeap:
          freed = true;
          ext = 8 - (cur & 7);
          break;
        case Region::Stack:
        case Region::Global:
        case Region::Decoy:
          nonheap = true;
          ext = mappedExtent(cur, reg);
          break;
        case Region::None:
          unmapped = true;
          ext = 8 - (cur & 7);
          break;
        }
        cur += ext;
      }
      if (other)
        ev.where = OobEvent::Where::OtherLive;
      else if (freed)
        ev.where = OobEvent::Where::Freed;
      else if (nonheap)
        ev.where = OobEvent::Where::NonHeapMapped;
      else if (unmapped)
        ev.where = OobEvent::Where::Unmapped;
      else
        ev.where = OobEvent::Where::OwnSlack;
    }
    report_.oobEvents.push_back(std::move(ev));
  }

  // Returns false when the access faults (report already filled).
  bool memAccess(Addr a, uint64_t len, const RegMeta &addrMeta,
                 bool &loadFromReserve) {
    loadFromReserve = false;
    recordProvenanceEvents(a, len, addrMeta);
    Addr bad = 0;
    if (!windowMapped(a, len, bad)) {
      if (bad < kNullPageEnd && addrMeta.reserveZero) {
        report_.outcome = Outcome::TF;
        report_.tfPc = pcString();
        traceLine({{"event", "nullDeref"}, {"pc", pcString()}, {"addr", bad}});
        done_ = true;
        return false;
      }
      fault(FaultKind::MemAccess,
            bad < kNullPageEnd ? "null dereference" : "unmapped access",
            pcString());
      return false;
    }
    recordReservedTouches(a, len);
    if (len > 0) {
      const Chunk *c = heap_.liveChunkContaining(a);
      if (c && a >= c->reservedTailBegin() && a + len <= c->end())
        loadFromReserve = true;
    }
    return true;
  }

  //===------------------------------------------------------------------===//
  // Operand evaluation
  //===------------------------------------------------------------------===//

  uint64_t evalOp(const Frame &f, const Operand &op) const {
    switch (op.kind) {
    case Operand::Kind::Value:
      return f.regs[op.value];
    case Operand::Kind::Imm:
      return uint64_t(op.imm);
    case Operand::Kind::Global:
      return globalAddrs_.at(op.sym);
    case Operand::Kind::Func: {
      auto it = funcAddrs_.find(op.sym);
      return it == funcAddrs_.end() ? 0 : it->second;
    }
    }
    return 0;
  }

  RegMeta metaOf(const Frame &f, const Operand &op) const {
    if (op.isValue())
      return f.meta[op.value];
    return RegMeta::none();
  }

  void setReg(Frame &f, ValueId v, uint64_t value, RegMeta meta) {
    f.regs[v] = value;
    f.meta[v] = meta;
    observe(f.func, v, int64_t(value));
  }

  //===------------------------------------------------------------------===//
  // One instruction
  //===------------------------------------------------------------------===//

  void step() {
    if (steps_ >= cfg_.stepBudget) {
      report_.outcome = Outcome::BudgetExceeded;
      done_ = true;
      return;
    }
    ++steps_;

    Frame &f = frames_.back();
    const Function &fn = p_.functions[f.func];
    const Instr &in = fn.blocks[f.block].instrs[f.index];

    switch (in.op) {
    case Opcode::HeapAlloc: {
      uint64_t size = evalOp(f, in.args[0]);
      AllocResult r = heap_.allocate(size);
      RegMeta meta;
      if (r.ok()) {
        meta.hasProv = true;
        meta.provBegin = r.begin;
        meta.provSeq = heap_.liveChunkAt(r.begin)->seq;
      }
      setReg(f, in.result, r.ok() ? r.begin : 0, meta);
      break;
    }
    case Opcode::HeapFree: {
      Addr a = evalOp(f, in.args[0]);
      if (heap_.release(a) == FreeResult::InvalidFree) {
        fault(FaultKind::InvalidFree, "invalid free", pcString());
        return;
      }
      break;
    }
    case Opcode::StackAlloc: {
      uint64_t bytes = roundUp8(sizeOf(*in.type, p_));
      if (f.stackCursor + bytes > f.stackLimit) {
        fault(FaultKind::StackOverflow, "stack frame exhausted", pcString());
        return;
      }
      Addr a = f.stackCursor;
      f.stackCursor += bytes;
      mem_.fill(a, bytes, 0);
      setReg(f, in.result, a, RegMeta::none());
      break;
    }
    case Opcode::Gep: {
      uint64_t base = evalOp(f, in.args[0]);
      int64_t idx = int64_t(evalOp(f, in.args[1]));
      __int128 addr = (__int128)base +
                      (__int128)idx * (__int128)sizeOf(*in.type, p_);
      if (addr < 0 || addr > (__int128)UINT64_MAX) {
        fault(FaultKind::PointerWrap, "pointer arithmetic wrapped", pcString());
        return;
      }
      RegMeta meta = metaOf(f, in.args[0]);
      setReg(f, in.result, uint64_t(addr), meta);
      break;
    }
    case Opcode::FieldGep: {
      uint64_t base = evalOp(f, in.args[0]);
      const StructDef *def = p_.findStruct(in.type->structName());
      __int128 addr = (__int128)base + def->fields[in.fieldIndex].offset;
      if (addr > (__int128)UINT64_MAX) {
        fault(FaultKind::PointerWrap, "pointer arithmetic wrapped", pcString());
        return;
      }
      setReg(f, in.result, uint64_t(addr), metaOf(f, in.args[0]));
      break;
    }
    case Opcode::Cast:
    case Opcode::IntToPtr:
    case Opcode::PtrToInt:
      setReg(f, in.result, evalOp(f, in.args[0]), metaOf(f, in.args[0]));
      break;
    case Opcode::Load: {
      Addr a = evalOp(f, in.args[0]);
      unsigned bytes = unsigned(sizeOf(*in.type, p_));
      bool fromReserve = false;
      if (!memAccess(a, bytes, metaOf(f, in.args[0]), fromReserve))
        return;
      uint64_t raw = mem_.loadScalar(a, bytes);
      uint64_t value = in.type->isInt()
                           ? uint64_t(sextTo64(raw, in.type->bits()))
                           : raw;
      RegMeta meta;
      if (fromReserve && value == 0) {
        meta.reserveZero = true;
        traceLine({{"event", "reservedLoad"},
                   {"pc", pcString()},
                   {"addr", a},
                   {"value", 0}});
      }
      setReg(f, in.result, value, meta);
      break;
    }
    case Opcode::Store: {
      Addr a = evalOp(f, in.args[1]);
      unsigned bytes = unsigned(sizeOf(*in.type, p_));
      bool fromReserve = false;
      if (!memAccess(a, bytes, metaOf(f, in.args[1]), fromReserve))
        return;
      mem_.storeScalar(a, bytes, evalOp(f, in.args[0]));
      break;
    }
    case Opcode::IntArith: {
      uint64_t a = evalOp(f, in.args[0]);
      uint64_t b = evalOp(f, in.args[1]);
      unsigned bits = in.type->bits();
      uint64_t za = zextOf(a, bits), zb = zextOf(b, bits);
      int64_t sa = sextTo64(a, bits), sb = sextTo64(b, bits);
      uint64_t r = 0;
      bool divZero = false;
      switch (in.arith) {
      case ArithOp::Add: r = uint64_t(sa) + uint64_t(sb); break;
      case ArithOp::Sub: r = uint64_t(sa) - uint64_t(sb); break;
      case ArithOp::Mul: r = uint64_t(sa) * uint64_t(sb); break;
      case ArithOp::UDiv: divZero = zb == 0; r = divZero ? 0 : za / zb; break;
      case ArithOp::SDiv: divZero = sb == 0; r = divZero ? 0 : uint64_t(sa / sb); break;
      case ArithOp::URem: divZero = zb == 0; r = divZero ? 0 : za % zb; break;
      case ArithOp::SRem: divZero = sb == 0; r = divZero ? 0 : uint64_t(sa % sb); break;
      case ArithOp::Shl: r = zb >= bits ? 0 : uint64_t(sa) << zb; break;
      case ArithOp::LShr: r = zb >= bits ? 0 : za >> zb; break;
      case ArithOp::AShr: r = zb >= bits ? uint64_t(sa < 0 ? -1 : 0)
                                         : uint64_t(sa >> int64_t(zb)); break;
      case ArithOp::And: r = a & b; break;
      case ArithOp::Or: r = a | b; break;
      case ArithOp::Xor: r = a ^ b; break;
      case ArithOp::Eq: r = za == zb; break;
      case ArithOp::Ne: r = za != zb; break;
      case ArithOp::Slt: r = sa < sb; break;
      case ArithOp::Sle: r = sa <= sb; break;
      case ArithOp::Sgt: r = sa > sb; break;
      case ArithOp::Sge: r = sa >= sb; break;
      case ArithOp::Ult: r = za < zb; break;
      case ArithOp::Ule: r = za <= zb; break;
      case ArithOp::Ugt: r = za > zb; break;
      case ArithOp::Uge: r = za >= zb; break;
      }
      if (divZero) {
        fault(FaultKind::MemAccess, "division by zero", pcString());
        return;
      }
      unsigned rbits = isComparison(in.arith) ? 1 : bits;
      uint64_t canonical = isComparison(in.arith)
                               ? (r & 1)
                               : uint64_t(sextTo64(r, rbits));
      RegMeta meta;
      if ((in.arith == ArithOp::Add || in.arith == ArithOp::Sub) &&
          (metaOf(f, in.args[0]).reserveZero ||
           metaOf(f, in.args[1]).reserveZero))
        meta.reserveZero = true;
      setReg(f, in.result, canonical, meta);
      break;
    }
    case Opcode::Call: {
      uint32_t callee = kNoBlock;
      size_t firstArg = 0;
      if (!in.callee.empty()) {
        callee = p_.functionIndex(in.callee);
      } else {
        Addr target = evalOp(f, in.args[0]);
        auto it = funcByAddr_.find(target);
        if (it == funcByAddr_.end()) {
          fault(FaultKind::BadIndirect, "indirect call to non-function",
                pcString());
          return;
        }
        callee = it->second;
        firstArg = 1;
      }
      const Function &target = p_.functions[callee];
      if (in.args.size() - firstArg != target.params.size()) {
        fault(FaultKind::BadIndirect, "call arity mismatch", pcString());
        return;
      }
      std::vector<uint64_t> argv;
      std::vector<RegMeta> argm;
      for (size_t i = firstArg; i < in.args.size(); ++i) {
        argv.push_back(evalOp(f, in.args[i]));
        argm.push_back(metaOf(f, in.args[i]));
      }
      advance();
      pushFrame(callee, in.result);
      Frame &nf = frames_.back();
      for (size_t i = 0; i < argv.size(); ++i)
        setReg(nf, ValueId(i), argv[i], argm[i]);
      return; // no advance for the new frame
    }
    case Opcode::Intrinsic:
      if (!execIntrinsic(f, in))
        return;
      break;
    case Opcode::Br:
      jump(f, in.targets[0]);
      return;
    case Opcode::BrIf:
      jump(f, (evalOp(f, in.args[0]) & 1) ? in.targets[0] : in.targets[1]);
      return;
    case Opcode::Phi:
      // handled by jump(); stray phi means prevBlock was not set
      fault(FaultKind::AllocMisuse, "phi executed directly", pcString());
      return;
    case Opcode::Ret: {
      uint64_t value = in.args.empty() ? 0 : evalOp(f, in.args[0]);
      RegMeta meta = in.args.empty() ? RegMeta::none() : metaOf(f, in.args[0]);
      ValueId retTo = f.retTo;
      frames_.pop_back();
      if (frames_.empty()) {
        report_.returnValue = int64_t(value);
        done_ = true;
        return;
      }
      if (retTo != kNoValue)
        setReg(frames_.back(), retTo, value, meta);
      return;
    }
    case Opcode::SbExtract: {
      Addr src = evalOp(f, in.args[0]);
      CheckVerdict v = heap_.extractBounds(src);
      BoundsVal b;
      b.heap = v.kind != VerdictKind::NotHeap;
      b.beg = v.beg;
      b.end = v.end;
      f.bounds[in.result] = b;
      ++report_.stats.extractionsExecuted;
      break;
    }
    case Opcode::SbCheck: {
      ++report_.stats.checksExecuted;
      const BoundsVal &b = f.bounds[in.args[0].value];
      if (b.heap) {
        // The check guards the access window [res, res + extent): the
        // underflow half tests the address itself, the overflow half the
        // last byte that a dereference would touch.
        Addr res = evalOp(f, in.args[1]);
        uint64_t extent = uint64_t(in.checkConst);
        Addr top = res + (extent > 0 ? extent - 1 : 0);
        VerdictKind verdict = VerdictKind::InBounds;
        if ((in.checkHalves & kCheckUnderflow)) {
          ++report_.stats.halfChecksExecuted;
          if (res < b.beg)
            verdict = VerdictKind::OobUnderflow;
        }
        if (verdict == VerdictKind::InBounds &&
            (in.checkHalves & kCheckOverflow)) {
          ++report_.stats.halfChecksExecuted;
          if (top >= b.end)
            verdict = VerdictKind::OobOverflow;
        }
        traceLine({{"event", "check"},
                   {"pc", pcString()},
                   {"site", in.siteId},
                   {"verdict", verdictName(verdict)}});
        if (verdict != VerdictKind::InBounds) {
          report_.outcome = Outcome::OD;
          report_.odSite = in.siteId;
          report_.odVerdict = verdictName(verdict);
          report_.odPc = pcString();
          done_ = true;
          return;
        }
      } else {
        traceLine({{"event", "check"},
                   {"pc", pcString()},
                   {"site", in.siteId},
                   {"verdict", "notHeap"}});
      }
      break;
    }
    }
    advance();
  }

  void advance() {
    Frame &f = frames_.back();
    ++f.index;
  }

  void jump(Frame &f, uint32_t target) {
    const Function &fn = p_.functions[f.func];
    uint32_t from = f.block;
    f.prevBlock = from;
    f.block = target;
    f.index = 0;
    // Parallel phi evaluation against the edge just taken.
    const Block &bb = fn.blocks[target];
    std::vector<std::pair<ValueId, std::pair<uint64_t, RegMeta>>> writes;
    for (const auto &in : bb.instrs) {
      if (in.op != Opcode::Phi)
        break;
      for (size_t i = 0; i < in.targets.size(); ++i) {
        if (in.targets[i] == from) {
          writes.push_back(
              {in.result, {evalOp(f, in.args[i]), metaOf(f, in.args[i])}});
          break;
        }
      }
      ++f.index;
    }
    for (auto &[v, vm] : writes)
      setReg(f, v, vm.first, vm.second);
  }

  //===------------------------------------------------------------------===//
  // Intrinsics
  //===------------------------------------------------------------------===//

  bool checkIntrinsicPtr(Addr pa, uint64_t len) {
    if (!heap_.isHeapAddr(pa))
      return true;
    CheckVerdict v = heap_.rangeCheck(pa, len);
    ++report_.stats.checksExecuted;
    report_.stats.halfChecksExecuted += 2;
    traceLine({{"event", "intrinsicCheck"},
               {"pc", pcString()},
               {"verdict", verdictName(v.kind)}});
    if (!v.ok()) {
      report_.outcome = Outcome::OD;
      report_.odSite = UINT32_MAX;
      report_.odVerdict = verdictName(v.kind);
      report_.odPc = pcString();
      done_ = true;
      return false;
    }
    return true;
  }

  bool execIntrinsic(Frame &f, const Instr &in) {
    switch (in.intrinsic) {
    case IntrinsicKind::Input: {
      uint64_t i = evalOp(f, in.args[0]);
      int64_t v = i < input_.size() ? input_[i] : 0;
      setReg(f, in.result, uint64_t(v), RegMeta::none());
      return true;
    }
    case IntrinsicKind::Print:
      report_.outputs.push_back(int64_t(evalOp(f, in.args[0])));
      return true;
    case IntrinsicKind::Memset: {
      Addr dst = evalOp(f, in.args[0]);
      uint8_t byte = uint8_t(evalOp(f, in.args[1]));
      uint64_t len = evalOp(f, in.args[2]);
      steps_ += len / 64;
      if (!checkIntrinsicPtr(dst, len))
        return false;
      bool fromReserve = false;
      if (!memAccess(dst, len, metaOf(f, in.args[0]), fromReserve))
        return false;
      mem_.fill(dst, len, byte);
      return true;
    }
    case IntrinsicKind::Memcpy: {
      Addr dst = evalOp(f, in.args[0]);
      Addr src = evalOp(f, in.args[1]);
      uint64_t len = evalOp(f, in.args[2]);
      steps_ += len / 64;
      if (!checkIntrinsicPtr(dst, len) || !checkIntrinsicPtr(src, len))
        return false;
      bool r = false;
      if (!memAccess(src, len, metaOf(f, in.args[1]), r) ||
          !memAccess(dst, len, metaOf(f, in.args[0]), r))
        return false;
      mem_.copy(dst, src, len);
      return true;
    }
    case IntrinsicKind::Strcpy: {
      Addr dst = evalOp(f, in.args[0]);
      Addr src = evalOp(f, in.args[1]);
      // Measure the source string inside the VM before copying.
      uint64_t len = 0;
      while (true) {
        Addr bad = 0;
        if (!windowMapped(src + len, 1, bad)) {
          fault(FaultKind::MemAccess, "unmapped access", pcString());
          return false;
        }
        if (mem_.load8(src + len) == 0)
          break;
        ++len;
        if (len > (64ULL << 20)) {
          fault(FaultKind::MemAccess, "unterminated string", pcString());
          return false;
        }
      }
      uint64_t total = len + 1;
      steps_ += total / 64;
      if (!checkIntrinsicPtr(src, total) || !checkIntrinsicPtr(dst, total))
        return false;
      bool r = false;
      if (!memAccess(src, total, metaOf(f, in.args[1]), r) ||
          !memAccess(dst, total, metaOf(f, in.args[0]), r))
        return false;
      mem_.copy(dst, src, total);
      return true;
    }
    }
    return true;
  }

  //===------------------------------------------------------------------===//

  const Program &p_;
  VmConfig cfg_;
  std::vector<int64_t> input_;
  SparseMemory mem_;
  ShadowHeap heap_;
  std::vector<Frame> frames_;
  std::map<std::string, Addr> globalAddrs_;
  Addr globalEnd_ = 0;
  std::map<std::string, Addr> funcAddrs_;
  std::map<Addr, uint32_t> funcByAddr_;
  Addr stackLow_ = UINT64_MAX;
  uint64_t steps_ = 0;
  bool done_ = false;
  RunReport report_;
};

} // namespace

RunReport run(const Program &p, const std::vector<int64_t> &input,
              const VmConfig &cfg) {
  Vm vm(p, input, cfg);
  return vm.run();
}

} // namespace sbound
