#include "sbound/analysis.hpp"

#include <algorithm>
#include <cassert>

namespace sbound {

//===----------------------------------------------------------------------===//
// Dominance
//===----------------------------------------------------------------------===//

namespace {

// Iterative dominator computation over an explicit edge list. `root` must be
// index 0 of `order` (reverse postorder from the root).
std::vector<uint32_t> domTree(uint32_t n, uint32_t root,
                              const std::vector<std::vector<uint32_t>> &preds,
                              const std::vector<uint32_t> &rpo) {
  std::vector<uint32_t> rpoPos(n, 0xffffffffu);
  for (uint32_t i = 0; i < rpo.size(); ++i)
    rpoPos[rpo[i]] = i;

  std::vector<uint32_t> idom(n, 0xffffffffu);
  idom[root] = root;

  auto intersect = [&](uint32_t a, uint32_t b) {
    while (a != b) {
      while (rpoPos[a] > rpoPos[b])
        a = idom[a];
      while (rpoPos[b] > rpoPos[a])
        b = idom[b];
    }
    return a;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t b : rpo) {
      if (b == root)
        continue;
      uint32_t newIdom = 0xffffffffu;
      for (uint32_t p : preds[b]) {
        if (idom[p] == 0xffffffffu)
          continue;
        newIdom = newIdom == 0xffffffffu ? p : intersect(p, newIdom);
      }
      if (newIdom != 0xffffffffu && idom[b] != newIdom) {
        idom[b] = newIdom;
        changed = true;
      }
    }
  }
  return idom;
}

std::vector<uint32_t> reversePostorder(
    uint32_t root, const std::vector<std::vector<uint32_t>> &succs) {
  std::vector<uint32_t> order;
  std::vector<bool> seen(succs.size(), false);
  std::vector<std::pair<uint32_t, size_t>> stack{{root, 0}};
  seen[root] = true;
  while (!stack.empty()) {
    auto &[b, next] = stack.back();
    if (next < succs[b].size()) {
      uint32_t s = succs[b][next++];
      if (!seen[s]) {
        seen[s] = true;
        stack.push_back({s, 0});
      }
    } else {
      order.push_back(b);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

} // namespace

DomInfo computeDom(const Function &f) {
  DomInfo info;
  uint32_t n = uint32_t(f.blocks.size());
  info.succs.assign(n, {});
  info.preds.assign(n, {});
  for (uint32_t b = 0; b < n; ++b) {
    if (f.blocks[b].instrs.empty())
      continue;
    const Instr &last = f.blocks[b].instrs.back();
    if (last.op == Opcode::Br || last.op == Opcode::BrIf)
      for (uint32_t t : last.targets)
        info.succs[b].push_back(t);
  }
  for (uint32_t b = 0; b < n; ++b)
    for (uint32_t s : info.succs[b])
      info.preds[s].push_back(b);

  info.reachable.assign(n, false);
  if (n) {
    std::vector<uint32_t> rpo = reversePostorder(0, info.succs);
    for (uint32_t b : rpo)
      info.reachable[b] = true;
    info.idom = domTree(n, 0, info.preds, rpo);

    // Post-dominance: reversed CFG rooted at a virtual exit node n. Every
    // return block is an exit; so is any block with no successors.
    uint32_t vx = n;
    std::vector<std::vector<uint32_t>> rsuccs(n + 1), rpreds(n + 1);
    for (uint32_t b = 0; b < n; ++b) {
      for (uint32_t s : info.succs[b]) {
        rsuccs[s].push_back(b);
        rpreds[b].push_back(s);
      }
      if (info.succs[b].empty() && info.reachable[b]) {
        rsuccs[vx].push_back(b);
        rpreds[b].push_back(vx);
      }
    }
    std::vector<uint32_t> rrpo = reversePostorder(vx, rsuccs);
    std::vector<uint32_t> ipdomAll = domTree(n + 1, vx, rpreds, rrpo);
    info.ipdom.assign(n, DomInfo::kVirtualExit);
    for (uint32_t b = 0; b < n; ++b)
      info.ipdom[b] = ipdomAll[b] == vx || ipdomAll[b] == 0xffffffffu
                          ? DomInfo::kVirtualExit
                          : ipdomAll[b];
  }
  return info;
}

bool DomInfo::dominates(uint32_t a, uint32_t b) const {
  if (b >= idom.size() || a >= idom.size())
    return false;
  if (!reachable[b])
    return false;
  uint32_t x = b;
  while (true) {
    if (x == a)
      return true;
    if (idom[x] == x || idom[x] == 0xffffffffu)
      return x == a;
    x = idom[x];
  }
}

bool DomInfo::postDominates(uint32_t a, uint32_t b) const {
  uint32_t x = b;
  while (true) {
    if (x == a)
      return true;
    if (x == kVirtualExit || x >= ipdom.size())
      return false;
    uint32_t up = ipdom[x];
    if (up == x)
      return false;
    x = up;
  }
}

bool DomInfo::instrDominates(InstrRef a, InstrRef b) const {
  if (a.block == b.block)
    return a.index < b.index;
  return dominates(a.block, b.block);
}

//===----------------------------------------------------------------------===//
// Interval arithmetic
//===----------------------------------------------------------------------===//

namespace {

constexpr int64_t kMinI64 = INT64_MIN;
constexpr int64_t kMaxI64 = INT64_MAX;

bool addOv(int64_t a, int64_t b, int64_t &out) {
  return __builtin_add_overflow(a, b, &out);
}
bool mulOv(int64_t a, int64_t b, int64_t &out) {
  return __builtin_mul_overflow(a, b, &out);
}

} // namespace

RangeInterval RangeInterval::join(const RangeInterval &o) const {
  RangeInterval r;
  r.negInf = negInf || o.negInf;
  r.posInf = posInf || o.posInf;
  r.lo = r.negInf ? 0 : std::min(lo, o.lo);
  r.hi = r.posInf ? 0 : std::max(hi, o.hi);
  return r;
}

RangeInterval RangeInterval::add(const RangeInterval &o, bool &overflow) const {
  RangeInterval r;
  r.negInf = negInf || o.negInf;
  r.posInf = posInf || o.posInf;
  if (!r.negInf && addOv(lo, o.lo, r.lo)) {
    r.negInf = true;
    overflow = true;
  }
  if (!r.posInf && addOv(hi, o.hi, r.hi)) {
    r.posInf = true;
    overflow = true;
  }
  return r;
}

RangeInterval RangeInterval::sub(const RangeInterval &o, bool &overflow) const {
  RangeInterval neg;
  neg.negInf = o.posInf;
  neg.posInf = o.negInf;
  if (!neg.negInf) {
    if (o.hi == kMinI64) {
      neg.negInf = true;
      overflow = true;
    } else {
      neg.lo = -o.hi;
    }
  }
  if (!neg.posInf) {
    if (o.lo == kMinI64) {
      neg.posInf = true;
      overflow = true;
    } else {
      neg.hi = -o.lo;
    }
  }
  return add(neg, overflow);
}

RangeInterval RangeInterval::mul(const RangeInterval &o, bool &overflow) const {
  if (isTop() || o.isTop() || negInf || posInf || o.negInf || o.posInf) {
    // Unbounded operand: the product is unbounded unless one side is exactly
    // zero; treat it as top and flag it.
    if (!negInf && !posInf && lo == 0 && hi == 0)
      return constant(0);
    if (!o.negInf && !o.posInf && o.lo == 0 && o.hi == 0)
      return constant(0);
    overflow = true;
    return top();
  }
  int64_t best = kMaxI64, worst = kMinI64;
  bool bad = false;
  for (int64_t a : {lo, hi})
    for (int64_t b : {o.lo, o.hi}) {
      int64_t prod;
      if (mulOv(a, b, prod)) {
        bad = true;
        continue;
      }
      best = std::min(best, prod);
      worst = std::max(worst, prod);
    }
  if (bad) {
    overflow = true;
    return top();
  }
  return of(best, worst);
}

RangeInterval RangeInterval::scale(int64_t k, bool &overflow) const {
  return mul(constant(k), overflow);
}

RangeInterval RangeInterval::offset(int64_t k, bool &overflow) const {
  return add(constant(k), overflow);
}

RangeInterval RangeInfo::of(const Operand &op) const {
  if (op.isImm())
    return RangeInterval::constant(op.imm);
  if (op.isValue())
    return values[op.value].interval;
  return RangeInterval::top();
}

bool RangeInfo::operandMayWrap(const Operand &op) const {
  return op.isValue() && values[op.value].mayWrap;
}

//===----------------------------------------------------------------------===//
// computeRanges
//===----------------------------------------------------------------------===//

namespace {

struct GuardedPhi {
  RangeInterval range;
};

// Natural loop body of back edge latch->header: blocks that reach the latch
// without passing through the header.
std::vector<bool> naturalLoop(const DomInfo &dom, uint32_t header,
                              uint32_t latch) {
  std::vector<bool> in(dom.preds.size(), false);
  in[header] = true;
  std::vector<uint32_t> work{latch};
  while (!work.empty()) {
    uint32_t b = work.back();
    work.pop_back();
    if (in[b])
      continue;
    in[b] = true;
    for (uint32_t p : dom.preds[b])
      work.push_back(p);
  }
  return in;
}

// Upper/lower refinement for an induction phi guarded by a comparison with
// the loop-exit branch. Returns false when the guard shape gives no bound.
bool refineGuardedPhi(const Function &f, const DomInfo &dom, ValueId phiVal,
                      const Instr &phi, uint32_t header, uint32_t latchPred,
                      int64_t init, int64_t step, ValueId stepValue,
                      RangeInterval &out) {
  std::vector<bool> loop = naturalLoop(dom, header, latchPred);

  for (uint32_t g = 0; g < f.blocks.size(); ++g) {
    if (!loop[g])
      continue;
    const Block &gb = f.blocks[g];
    if (gb.instrs.empty())
      continue;
    const Instr &term = gb.instrs.back();
    if (term.op != Opcode::BrIf || !term.args[0].isValue())
      continue;
    const ValueDef &condDef = f.valueDefs[term.args[0].value];
    if (condDef.kind != ValueDef::Kind::Param) {
      const Instr &cmp = f.instr(condDef.at);
      if (cmp.op != Opcode::IntArith || !isComparison(cmp.arith))
        continue;
      if (!cmp.args[0].isValue())
        continue;
      ValueId x = cmp.args[0].value;
      if (x != phiVal && x != stepValue)
        continue;
      bool onStep = x == stepValue;

      uint32_t tSucc = term.targets[0], fSucc = term.targets[1];
      bool tIn = loop[tSucc], fIn = loop[fSucc];
      if (tIn == fIn)
        continue; // not a loop exit guard
      bool continueOnTrue = tIn;

      ArithOp cond = cmp.arith;
      if (!continueOnTrue) {
        switch (cond) {
        case ArithOp::Slt: cond = ArithOp::Sge; break;
        case ArithOp::Sle: cond = ArithOp::Sgt; break;
        case ArithOp::Sgt: cond = ArithOp::Sle; break;
        case ArithOp::Sge: cond = ArithOp::Slt; break;
        case ArithOp::Ult: cond = ArithOp::Uge; break;
        case ArithOp::Ule: cond = ArithOp::Ugt; break;
        case ArithOp::Ugt: cond = ArithOp::Ule; break;
        case ArithOp::Uge: cond = ArithOp::Ult; break;
        default:
          continue;
        }
      }

      bool boundConst = cmp.args[1].isImm();
      int64_t k = boundConst ? cmp.args[1].imm : 0;
      // Unsigned guards behave like signed ones for the nonnegative
      // inductions this analysis tracks.
      bool upperGuard = cond == ArithOp::Slt || cond == ArithOp::Sle ||
                        cond == ArithOp::Ult || cond == ArithOp::Ule;
      bool lowerGuard = cond == ArithOp::Sgt || cond == ArithOp::Sge ||
                        cond == ArithOp::Ugt || cond == ArithOp::Uge;
      bool inclusive = cond == ArithOp::Sle || cond == ArithOp::Ule ||
                       cond == ArithOp::Sge || cond == ArithOp::Uge;
      bool unsignedGuard = cond == ArithOp::Ult || cond == ArithOp::Ule ||
                           cond == ArithOp::Ugt || cond == ArithOp::Uge;
      if (unsignedGuard && init < 0)
        continue;

      if (step > 0 && upperGuard) {
        out.lo = init;
        out.negInf = false;
        if (boundConst) {
          // Last header value is the first one failing the guard.
          int64_t last = onStep ? (inclusive ? k : k - 1)
                                : k + step - (inclusive ? 0 : 1);
          out.hi = std::max(init, last);
          out.posInf = false;
        } else {
          out.posInf = true;
        }
        return true;
      }
      if (step < 0 && lowerGuard) {
        out.hi = init;
        out.posInf = false;
        if (boundConst) {
          int64_t last = onStep ? (inclusive ? k : k + 1)
                                : k + step + (inclusive ? 0 : 1);
          out.lo = std::min(init, last);
          out.negInf = false;
        } else {
          out.negInf = true;
        }
        return true;
      }
    }
  }
  (void)phi;
  return false;
}

RangeInterval widthRange(const TypeRef &t) {
  if (!t || !t->isInt() || t->bits() >= 64)
    return RangeInterval::top();
  switch (t->bits()) {
  case 1:
    return RangeInterval::of(0, 1);
  case 8:
    return RangeInterval::of(INT8_MIN, INT8_MAX);
  case 16:
    return RangeInterval::of(INT16_MIN, INT16_MAX);
  case 32:
    return RangeInterval::of(INT32_MIN, INT32_MAX);
  }
  return RangeInterval::top();
}

} // namespace

RangeInfo computeRanges(const Function &f, const Program &p) {
  (void)p;
  RangeInfo info;
  info.values.assign(f.numValues(), ValueRange{RangeInterval::top(), false});

  DomInfo dom = computeDom(f);

  // Guarded induction phis get fixed intervals up front; the exit guard both
  // bounds them and rules out wraparound.
  std::map<ValueId, GuardedPhi> guarded;
  for (uint32_t b = 0; b < f.blocks.size(); ++b) {
    if (!dom.reachable[b])
      continue;
    for (const auto &in : f.blocks[b].instrs) {
      if (in.op != Opcode::Phi || in.args.size() != 2 ||
          !in.type || !in.type->isInt())
        continue;
      for (int initIdx = 0; initIdx < 2; ++initIdx) {
        int latchIdx = 1 - initIdx;
        uint32_t latchPred = in.targets[latchIdx];
        if (!dom.dominates(b, latchPred))
          continue; // not a back edge
        if (!in.args[initIdx].isImm() || !in.args[latchIdx].isValue())
          continue;
        ValueId stepVal = in.args[latchIdx].value;
        const ValueDef &sd = f.valueDefs[stepVal];
        if (sd.kind != ValueDef::Kind::Instr)
          continue;
        const Instr &stepIn = f.instr(sd.at);
        if (stepIn.op != Opcode::IntArith)
          continue;
        int64_t step = 0;
        if (stepIn.arith == ArithOp::Add) {
          if (stepIn.args[0].isValue() && stepIn.args[0].value == in.result &&
              stepIn.args[1].isImm())
            step = stepIn.args[1].imm;
          else if (stepIn.args[1].isValue() &&
                   stepIn.args[1].value == in.result && stepIn.args[0].isImm())
            step = stepIn.args[0].imm;
        } else if (stepIn.arith == ArithOp::Sub) {
          if (stepIn.args[0].isValue() && stepIn.args[0].value == in.result &&
              stepIn.args[1].isImm())
            step = -stepIn.args[1].imm;
        }
        if (step == 0)
          continue;
        RangeInterval r = RangeInterval::top();
        if (refineGuardedPhi(f, dom, in.result, in, b, latchPred,
                             in.args[initIdx].imm, step, stepVal, r)) {
          guarded[in.result] = GuardedPhi{r};
          info.values[in.result] = {r, false};
        }
        break;
      }
    }
  }

  auto evalInstr = [&](const Instr &in) -> ValueRange {
    switch (in.op) {
    case Opcode::IntArith: {
      if (isComparison(in.arith))
        return {RangeInterval::of(0, 1), false};
      RangeInterval a = info.of(in.args[0]);
      RangeInterval b = info.of(in.args[1]);
      bool wrap = info.operandMayWrap(in.args[0]) ||
                  info.operandMayWrap(in.args[1]);
      bool ov = false;
      RangeInterval r = RangeInterval::top();
      switch (in.arith) {
      case ArithOp::Add:
        r = a.add(b, ov);
        break;
      case ArithOp::Sub:
        r = a.sub(b, ov);
        break;
      case ArithOp::Mul:
        r = a.mul(b, ov);
        break;
      case ArithOp::SDiv:
      case ArithOp::UDiv:
        if (in.args[1].isImm() && in.args[1].imm > 0 && !a.negInf &&
            !a.posInf && (in.arith == ArithOp::SDiv || a.lo >= 0)) {
          r = RangeInterval::of(a.lo / in.args[1].imm, a.hi / in.args[1].imm);
        } else {
          ov = true;
        }
        break;
      case ArithOp::URem:
        if (in.args[1].isImm() && in.args[1].imm > 0)
          r = RangeInterval::of(0, in.args[1].imm - 1);
        else
          ov = true;
        break;
      case ArithOp::Shl:
        if (in.args[1].isImm() && in.args[1].imm >= 0 && in.args[1].imm < 63) {
          r = a.scale(int64_t(1) << in.args[1].imm, ov);
        } else {
          ov = true;
        }
        break;
      default:
        ov = true; // remaining bit ops: no useful interval
        break;
      }
      // Narrow-width arithmetic stays within its width or wrapped.
      RangeInterval w = widthRange(in.type);
      if (!r.subsetOf(w)) {
        r = w;
        ov = true;
      }
      return {r, wrap || ov};
    }
    case Opcode::Phi: {
      RangeInterval r;
      bool first = true;
      bool wrap = false;
      for (const auto &a : in.args) {
        RangeInterval ar = info.of(a);
        wrap = wrap || info.operandMayWrap(a);
        r = first ? ar : r.join(ar);
        first = false;
      }
      return {r, wrap};
    }
    case Opcode::Load:
      return {widthRange(in.type), false};
    default:
      return {RangeInterval::top(), false};
    }
  };

  // Bounded fixpoint: two accumulation passes, widen what is still moving,
  // then settle. Guarded phis keep their precomputed intervals.
  uint32_t passes = 0;
  const uint32_t maxPasses = 8;
  std::vector<ValueRange> prev;
  while (passes < maxPasses) {
    ++passes;
    prev = info.values;
    for (uint32_t b = 0; b < f.blocks.size(); ++b) {
      if (!dom.reachable[b])
        continue;
      for (const auto &in : f.blocks[b].instrs) {
        if (in.result == kNoValue)
          continue;
        if (guarded.count(in.result))
          continue;
        if (!f.valueTypes[in.result]->isInt())
          continue;
        ValueRange next = evalInstr(in);
        if (passes <= 2) {
          info.values[in.result] = next;
        } else {
          // widening: any still-moving bound goes to infinity
          ValueRange &cur = info.values[in.result];
          RangeInterval widened = next.interval;
          if (!next.interval.negInf && !cur.interval.negInf &&
              next.interval.lo < cur.interval.lo)
            widened.negInf = true;
          if (!next.interval.posInf && !cur.interval.posInf &&
              next.interval.hi > cur.interval.hi)
            widened.posInf = true;
          cur = {widened, next.mayWrap};
        }
      }
    }
    bool stable = true;
    for (uint32_t v = 0; v < info.values.size(); ++v)
      if (!(info.values[v].interval == prev[v].interval) ||
          info.values[v].mayWrap != prev[v].mayWrap)
        stable = false;
    if (stable && passes > 2)
      break;
  }

  return info;
}

//===----------------------------------------------------------------------===//
// computeEscapes
//===----------------------------------------------------------------------===//

std::vector<EscapeFact> computeEscapes(const Function &f,
                                       const std::vector<bool> &checkBase) {
  std::vector<EscapeFact> facts(f.numValues());
  auto mark = [&](ValueId v, uint8_t reason) {
    facts[v].escapes = true;
    facts[v].reasons |= reason;
  };

  for (ValueId v = 0; v < f.numValues(); ++v)
    if (v < checkBase.size() && checkBase[v])
      mark(v, kEscBaseOfCheck);

  for (const auto &bb : f.blocks) {
    for (const auto &in : bb.instrs) {
      switch (in.op) {
      case Opcode::Call:
        for (const auto &a : in.args)
          if (a.isValue())
            mark(a.value, kEscPassedToCall);
        break;
      case Opcode::Store:
        if (in.args[0].isValue())
          mark(in.args[0].value, kEscStoredToMemory);
        break;
      case Opcode::Ret:
        if (!in.args.empty() && in.args[0].isValue())
          mark(in.args[0].value, kEscReturned);
        break;
      case Opcode::PtrToInt:
        if (in.args[0].isValue())
          mark(in.args[0].value, kEscStoredToMemory);
        break;
      default:
        break;
      }
    }
  }

  // Close over value-preserving flows: if a phi or cast result escapes, the
  // incoming pointers escape with it.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto &bb : f.blocks) {
      for (const auto &in : bb.instrs) {
        if (in.result == kNoValue || !facts[in.result].escapes)
          continue;
        if (in.op != Opcode::Phi && in.op != Opcode::Cast)
          continue;
        for (const auto &a : in.args) {
          if (a.isValue() && !facts[a.value].escapes) {
            mark(a.value, kEscViaPhi);
            changed = true;
          }
        }
      }
    }
  }
  return facts;
}

//===----------------------------------------------------------------------===//
// computeAllocSizes
//===----------------------------------------------------------------------===//

std::vector<AllocSizeFact>
computeAllocSizes(const Program &p, const Function &f,
                  const std::vector<bool> &activeCastCheck) {
  std::vector<AllocSizeFact> facts(f.numValues());
  std::vector<bool> foreign = foreignPointers(f);

  for (int pass = 0; pass < 3; ++pass) {
    for (const auto &bb : f.blocks) {
      for (const auto &in : bb.instrs) {
        if (in.result == kNoValue || foreign[in.result])
          continue;
        AllocSizeFact &fact = facts[in.result];
        switch (in.op) {
        case Opcode::HeapAlloc:
          if (in.args[0].isImm() && in.args[0].imm > 0)
            fact = {true, false, uint64_t(in.args[0].imm),
                    SizeProvenance::LocalHeapAlloc};
          break;
        case Opcode::StackAlloc:
          fact = {true, false, sizeOf(*in.type, p), SizeProvenance::StackAlloc};
          break;
        case Opcode::Cast:
          if (in.result < activeCastCheck.size() &&
              activeCastCheck[in.result] && !in.type->pointee()->isVoid())
            fact = {true, true, sizeOf(*in.type->pointee(), p),
                    SizeProvenance::CheckedCast};
          break;
        case Opcode::FieldGep: {
          const StructDef *def = p.findStruct(in.type->structName());
          if (!def)
            break;
          const StructField &field = def->fields[in.fieldIndex];
          if (!field.type->isArray())
            break;
          if (!in.args[0].isValue())
            break;
          const AllocSizeFact &base = facts[in.args[0].value];
          uint64_t arrBytes = sizeOf(*field.type, p);
          if (base.known && base.bytes >= field.offset + arrBytes)
            fact = {true, false, arrBytes, SizeProvenance::StructArrayField};
          break;
        }
        case Opcode::Gep: {
          if (!in.args[0].isValue() || !in.args[1].isImm() ||
              in.args[1].imm < 0)
            break;
          const AllocSizeFact &base = facts[in.args[0].value];
          if (!base.known)
            break;
          uint64_t off = uint64_t(in.args[1].imm) * sizeOf(*in.type, p);
          if (off < base.bytes)
            fact = {true, base.lowerBound, base.bytes - off,
                    SizeProvenance::Derived};
          break;
        }
        case Opcode::Phi: {
          AllocSizeFact merged;
          bool all = true;
          for (const auto &a : in.args) {
            if (!a.isValue() || !facts[a.value].known) {
              all = false;
              break;
            }
            const AllocSizeFact &af = facts[a.value];
            if (!merged.known) {
              merged = af;
              merged.provenance = SizeProvenance::Derived;
            } else {
              merged.bytes = std::min(merged.bytes, af.bytes);
              merged.lowerBound = merged.lowerBound || af.lowerBound;
            }
          }
          if (all && merged.known)
            fact = merged;
          break;
        }
        default:
          break;
        }
      }
    }
  }
  return facts;
}

//===----------------------------------------------------------------------===//
// computeCallFacts
//===----------------------------------------------------------------------===//

bool CallFacts::calleeMayFree(const Instr &call) const {
  if (call.op == Opcode::Intrinsic)
    return false;
  if (call.op != Opcode::Call)
    return call.op == Opcode::HeapFree;
  if (call.callee.empty())
    return true; // indirect: unknown callee
  return mayFree.count(call.callee) != 0;
}

CallFacts computeCallFacts(const Program &p) {
  CallFacts facts;
  for (uint32_t fi = 0; fi < p.functions.size(); ++fi) {
    const Function &f = p.functions[fi];
    for (uint32_t b = 0; b < f.blocks.size(); ++b) {
      for (uint32_t i = 0; i < f.blocks[b].instrs.size(); ++i) {
        const Instr &in = f.blocks[b].instrs[i];
        if (in.op == Opcode::Call && !in.callee.empty())
          facts.callSites[in.callee].push_back({fi, {b, i}});
        for (const auto &op : in.args)
          if (op.kind == Operand::Kind::Func && p.findFunction(op.sym))
            facts.addressTaken.insert(op.sym);
      }
    }
  }

  // Transitive may-free over direct calls; indirect calls taint the caller.
  std::set<std::string> mayFree;
  for (const auto &f : p.functions) {
    for (const auto &bb : f.blocks) {
      for (const auto &in : bb.instrs) {
        if (in.op == Opcode::HeapFree ||
            (in.op == Opcode::Call && in.callee.empty()))
          mayFree.insert(f.name);
      }
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto &f : p.functions) {
      if (mayFree.count(f.name))
        continue;
      for (const auto &bb : f.blocks)
        for (const auto &in : bb.instrs)
          if (in.op == Opcode::Call && !in.callee.empty() &&
              mayFree.count(in.callee) && !mayFree.count(f.name)) {
            mayFree.insert(f.name);
            changed = true;
          }
    }
  }
  facts.mayFree = std::move(mayFree);
  return facts;
}

} // namespace sbound
