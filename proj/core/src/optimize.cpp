#include "sbound/optimize.hpp"
#include "sbound/parser.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <map>
#include <optional>

namespace sbound {

nlohmann::json logToJson(const EliminationLog &log) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto &e : log) {
    nlohmann::json j{{"site", e.site}, {"pass", e.pass}, {"action", e.action},
                     {"why", e.why}};
    if (!e.mergeKey.empty())
      j["into"] = e.mergeKey;
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

//===----------------------------------------------------------------------===//
// Site views
//===----------------------------------------------------------------------===//

struct SiteView {
  uint32_t siteId = 0;
  InstrRef checkRef;
  InstrRef siteRef;   // defining gep/fieldgep/cast; invalid for Unknown
  SiteOrigin origin = SiteOrigin::Unknown;
  ValueId binding = kNoValue;
  ValueId result = kNoValue; // site instruction result
  Operand base;              // site instruction base operand
  Operand extractSource;     // current extraction source
  uint8_t halves = 0;
  int64_t checkConst = 0;
};

std::vector<SiteView> scanSites(const Function &f) {
  std::vector<SiteView> views;
  for (uint32_t b = 0; b < f.blocks.size(); ++b) {
    for (uint32_t i = 0; i < f.blocks[b].instrs.size(); ++i) {
      const Instr &in = f.blocks[b].instrs[i];
      if (in.op != Opcode::SbCheck)
        continue;
      SiteView v;
      v.siteId = in.siteId;
      v.checkRef = {b, i};
      v.binding = in.args[0].value;
      v.halves = in.checkHalves;
      v.checkConst = in.checkConst;
      const ValueDef &bd = f.valueDefs[v.binding];
      if (bd.kind == ValueDef::Kind::Instr)
        v.extractSource = f.instr(bd.at).args[0];
      if (in.args[1].isValue()) {
        const ValueDef &rd = f.valueDefs[in.args[1].value];
        if (rd.kind == ValueDef::Kind::Instr) {
          const Instr &site = f.instr(rd.at);
          switch (site.op) {
          case Opcode::Gep: v.origin = SiteOrigin::Gep; break;
          case Opcode::FieldGep: v.origin = SiteOrigin::FieldGep; break;
          case Opcode::Cast: v.origin = SiteOrigin::Cast; break;
          default: break;
          }
          if (v.origin != SiteOrigin::Unknown) {
            v.siteRef = rd.at;
            v.result = site.result;
            v.base = site.args[0];
          }
        }
      }
      if (v.origin == SiteOrigin::Unknown)
        v.base = v.extractSource;
      views.push_back(std::move(v));
    }
  }
  return views;
}

// Byte offset of the checked address relative to the base pointer. The check
// window is [base + raw, base + raw + extent); the underflow half guards the
// low end, the overflow half the last byte.
struct OffsetExpr {
  RangeInterval raw;     // address minus base, in bytes (extent excluded)
  int64_t extent = 0;    // access extent carried by the check
  bool mayWrap = false;
  bool hasIndex = false; // raw = scale * index + constant
  Operand index;
  int64_t scale = 0;
  int64_t constant = 0;

  // Interval of the last byte the window touches, relative to base.
  RangeInterval top(bool &ov) const {
    return raw.offset(extent > 0 ? extent - 1 : 0, ov);
  }
  // raw ⊆ [0, limit − extent], the form every size-based rule needs.
  bool windowWithin(uint64_t limit) const {
    if (mayWrap || uint64_t(extent) > limit)
      return false;
    return raw.subsetOf(RangeInterval::of(0, int64_t(limit - uint64_t(extent))));
  }
};

OffsetExpr siteOffset(const SiteView &v, const Function &f, const Program &p,
                      const RangeInfo &ranges) {
  OffsetExpr e;
  e.extent = v.checkConst;
  switch (v.origin) {
  case SiteOrigin::Gep: {
    const Instr &site = f.instr(v.siteRef);
    int64_t es = int64_t(sizeOf(*site.type, p));
    const Operand &idx = site.args[1];
    if (idx.isImm()) {
      if (__builtin_mul_overflow(idx.imm, es, &e.constant)) {
        e.raw = RangeInterval::top();
        e.mayWrap = true;
        break;
      }
      e.raw = RangeInterval::constant(e.constant);
    } else {
      e.hasIndex = true;
      e.index = idx;
      e.scale = es;
      bool ov = false;
      e.raw = ranges.of(idx).scale(es, ov);
      e.mayWrap = ov || ranges.operandMayWrap(idx);
    }
    break;
  }
  case SiteOrigin::FieldGep: {
    const Instr &site = f.instr(v.siteRef);
    const StructDef *def = p.findStruct(site.type->structName());
    e.constant = int64_t(def->fields[site.fieldIndex].offset);
    e.raw = RangeInterval::constant(e.constant);
    break;
  }
  case SiteOrigin::Cast:
    e.constant = 0; // the checked address is the cast result itself
    e.raw = RangeInterval::constant(0);
    break;
  case SiteOrigin::Unknown:
    e.raw = RangeInterval::top();
    e.mayWrap = true;
    break;
  }
  return e;
}

bool sameOperand(const Operand &a, const Operand &b) { return a == b; }

// Interval of offB - offA, using syntactic equality of indices when possible.
// Interval of (rawB + biasB) − (rawA + biasA), using syntactic index
// equality when both offsets share the same scaled index.
RangeInterval offsetDiff(const OffsetExpr &b, int64_t biasB,
                         const OffsetExpr &a, int64_t biasA, bool &usable) {
  usable = !a.mayWrap && !b.mayWrap;
  bool sameShape = (!a.hasIndex && !b.hasIndex) ||
                   (a.hasIndex && b.hasIndex && sameOperand(a.index, b.index) &&
                    a.scale == b.scale);
  if (sameShape) {
    int64_t d;
    if (__builtin_sub_overflow(b.constant + biasB, a.constant + biasA, &d)) {
      usable = false;
      return RangeInterval::top();
    }
    return RangeInterval::constant(d);
  }
  bool ov = false;
  RangeInterval d =
      b.raw.offset(biasB, ov).sub(a.raw.offset(biasA, ov), ov);
  usable = usable && !ov;
  return d;
}

//===----------------------------------------------------------------------===//
// Edit engine: every structural change flows through here so that replaying
// the log reproduces the optimized program exactly.
//===----------------------------------------------------------------------===//

class Editor {
public:
  explicit Editor(InstrumentedProgram &ip) : ip_(ip) {}

  EliminationLog log;

  InstrRef findCheck(uint32_t fi, uint32_t siteId) const {
    const Function &f = ip_.prog.functions[fi];
    for (uint32_t b = 0; b < f.blocks.size(); ++b)
      for (uint32_t i = 0; i < f.blocks[b].instrs.size(); ++i) {
        const Instr &in = f.blocks[b].instrs[i];
        if (in.op == Opcode::SbCheck && in.siteId == siteId)
          return {b, i};
      }
    return {};
  }

  void removeSite(const std::string &pass, uint32_t fi, uint32_t siteId,
                  nlohmann::json why) {
    log.push_back({siteId, pass, "removeSite", std::move(why), ""});
    eraseCheck(fi, siteId, pass);
  }

  void dropHalf(const std::string &pass, uint32_t fi, uint32_t siteId,
                bool underflow, nlohmann::json why) {
    Function &f = ip_.prog.functions[fi];
    InstrRef ref = findCheck(fi, siteId);
    if (!ref.valid())
      return;
    Instr &check = f.instr(ref);
    uint8_t bit = underflow ? kCheckUnderflow : kCheckOverflow;
    if (!(check.checkHalves & bit))
      return;
    log.push_back({siteId, pass, underflow ? "dropUnderflow" : "dropOverflow",
                   std::move(why), ""});
    check.checkHalves &= ~bit;
    if (check.checkHalves == 0)
      eraseCheck(fi, siteId, pass); // both halves gone: the site is dead
  }

  void mergeInto(const std::string &pass, uint32_t fi, uint32_t siteId,
                 const std::string &key, nlohmann::json why) {
    log.push_back({siteId, pass, "mergeExtraction", std::move(why), key});
    applyMerge(fi, siteId, key);
  }

  void replay(const EliminationLog &entries) {
    for (const auto &e : entries) {
      uint32_t fi = functionOfSite(e.site);
      if (fi == kNoBlock)
        continue;
      if (e.action == "removeSite") {
        eraseCheck(fi, e.site, e.pass);
      } else if (e.action == "dropUnderflow" || e.action == "dropOverflow") {
        Function &f = ip_.prog.functions[fi];
        InstrRef ref = findCheck(fi, e.site);
        if (!ref.valid())
          continue;
        Instr &check = f.instr(ref);
        check.checkHalves &=
            ~(e.action == "dropUnderflow" ? kCheckUnderflow : kCheckOverflow);
        if (check.checkHalves == 0)
          eraseCheck(fi, e.site, e.pass);
      } else if (e.action == "mergeExtraction") {
        applyMerge(fi, e.site, e.mergeKey);
      }
    }
  }

private:
  uint32_t functionOfSite(uint32_t siteId) const {
    const SiteRecord *r =
        siteId < ip_.sites.size() ? &ip_.sites[siteId] : nullptr;
    return r ? r->func : kNoBlock;
  }

  void eraseCheck(uint32_t fi, uint32_t siteId, const std::string &pass) {
    Function &f = ip_.prog.functions[fi];
    InstrRef ref = findCheck(fi, siteId);
    if (!ref.valid())
      return;
    ValueId binding = f.instr(ref).args[0].value;
    f.blocks[ref.block].instrs.erase(f.blocks[ref.block].instrs.begin() +
                                     ref.index);
    eraseExtractIfUnused(f, binding);
    reindexFunction(f);
    if (SiteRecord *rec = ip_.findSite(siteId)) {
      rec->active = false;
      rec->eliminatedBy = pass;
    }
  }

  void eraseExtractIfUnused(Function &f, ValueId binding) {
    for (const auto &bb : f.blocks)
      for (const auto &in : bb.instrs)
        if (in.op == Opcode::SbCheck && in.args[0].value == binding)
          return;
    for (auto &bb : f.blocks) {
      for (uint32_t i = 0; i < bb.instrs.size(); ++i) {
        const Instr &in = bb.instrs[i];
        if (in.op == Opcode::SbExtract && in.result == binding) {
          bb.instrs.erase(bb.instrs.begin() + i);
          return;
        }
      }
    }
  }

  // Key forms: "%name" (value), "@name" (global/function), "#imm".
  Operand operandFromKey(const Function &f, const std::string &key) const {
    if (key.empty())
      return Operand::immediate(0);
    if (key[0] == '%') {
      std::string name = key.substr(1);
      for (ValueId v = 0; v < f.numValues(); ++v)
        if (f.valueNames[v] == name)
          return Operand::val(v);
      return Operand::immediate(0);
    }
    if (key[0] == '@') {
      std::string name = key.substr(1);
      if (ip_.prog.findGlobal(name))
        return Operand::global(name);
      return Operand::func(name);
    }
    return Operand::immediate(std::strtoll(key.c_str() + 1, nullptr, 10));
  }

  void applyMerge(uint32_t fi, uint32_t siteId, const std::string &key) {
    Function &f = ip_.prog.functions[fi];
    std::string mapKey = std::to_string(fi) + "/" + key;
    auto it = mergedBindings_.find(mapKey);
    ValueId binding;
    if (it != mergedBindings_.end()) {
      binding = it->second;
    } else {
      Operand source = operandFromKey(f, key);
      // Insertion point: right after the source definition, or the top of
      // the entry block for params, globals, and immediates.
      InstrRef at{0, 0};
      if (source.isValue()) {
        const ValueDef &d = f.valueDefs[source.value];
        if (d.kind == ValueDef::Kind::Instr)
          at = {d.at.block, d.at.index + 1};
      }
      std::set<std::string> names(f.valueNames.begin(), f.valueNames.end());
      std::string base = "sb.m." + (key[0] == '%' || key[0] == '@' || key[0] == '#'
                                        ? key.substr(1)
                                        : key);
      std::string name = base;
      for (int i = 1; names.count(name); ++i)
        name = base + "." + std::to_string(i);
      binding = f.numValues();
      f.valueNames.push_back(name);
      f.valueTypes.push_back(Type::boundsTy());
      f.valueDefs.push_back(ValueDef{});
      Instr extract;
      extract.op = Opcode::SbExtract;
      extract.result = binding;
      extract.args.push_back(source);
      f.blocks[at.block].instrs.insert(f.blocks[at.block].instrs.begin() +
                                           at.index,
                                       std::move(extract));
      reindexFunction(f);
      mergedBindings_[mapKey] = binding;
    }

    InstrRef ref = findCheck(fi, siteId);
    if (!ref.valid())
      return;
    Instr &check = f.instr(ref);
    ValueId old = check.args[0].value;
    if (old == binding)
      return;
    check.args[0] = Operand::val(binding);
    eraseExtractIfUnused(f, old);
    reindexFunction(f);
  }

  InstrumentedProgram &ip_;
  std::map<std::string, ValueId> mergedBindings_;
};

std::string operandKey(const Function &f, const Operand &op) {
  switch (op.kind) {
  case Operand::Kind::Value:
    return "%" + f.valueNames[op.value];
  case Operand::Kind::Global:
  case Operand::Kind::Func:
    return "@" + op.sym;
  case Operand::Kind::Imm:
    return "#" + std::to_string(op.imm);
  }
  return "#0";
}

//===----------------------------------------------------------------------===//
// rt-elim: reserved-space elimination plus type-cast-derived field checks
//===----------------------------------------------------------------------===//

void passRtElim(Editor &ed, InstrumentedProgram &ip, uint64_t n) {
  for (uint32_t fi = 0; fi < ip.prog.functions.size(); ++fi) {
    Function &f = ip.prog.functions[fi];
    RangeInfo ranges = computeRanges(f, ip.prog);
    std::vector<bool> foreign = foreignPointers(f);

    // Removals unlock more removals (a result ceases to be the base of an
    // active check, or stops escaping); iterate to a fixed point.
    while (true) {
      std::vector<SiteView> views = scanSites(f);
      std::vector<bool> checkBase(f.numValues(), false);
      for (const auto &v : views)
        if (v.extractSource.isValue())
          checkBase[v.extractSource.value] = true;
      std::vector<EscapeFact> escapes = computeEscapes(f, checkBase);

      struct Decision {
        uint32_t siteId;
        nlohmann::json why;
      };
      std::vector<Decision> batch;

      for (const auto &v : views) {
        if (v.origin == SiteOrigin::Unknown || foreign[v.result])
          continue;

        // (b) type-cast-derived: the base is the result of a cast to the
        // struct type whose check is still active; field extents are inside
        // the struct by layout.
        if (v.origin == SiteOrigin::FieldGep && v.base.isValue()) {
          const ValueDef &bd = f.valueDefs[v.base.value];
          if (bd.kind == ValueDef::Kind::Instr) {
            const Instr &castIn = f.instr(bd.at);
            const Instr &site = f.instr(v.siteRef);
            if (castIn.op == Opcode::Cast && castIn.type->pointee()->isStruct() &&
                castIn.type->pointee()->structName() ==
                    site.type->structName()) {
              const SiteView *castView = nullptr;
              for (const auto &c : views)
                if (c.origin == SiteOrigin::Cast && c.result == v.base.value)
                  castView = &c;
              if (castView) {
                const StructDef *def =
                    ip.prog.findStruct(site.type->structName());
                uint64_t fieldEnd = def->fields[site.fieldIndex].offset +
                                    sizeOf(*def->fields[site.fieldIndex].type,
                                           ip.prog);
                assert(fieldEnd <= def->size);
                batch.push_back(
                    {v.siteId,
                     {{"kind", "typeCast"},
                      {"struct", site.type->structName()},
                      {"castSite", castView->siteId},
                      {"fieldEnd", fieldEnd}}});
                continue;
              }
            }
          }
        }

        // (a) reserved space: access window within [0, n] of the base,
        // result never leaks and never anchors another live check.
        OffsetExpr off = siteOffset(v, f, ip.prog, ranges);
        if (!off.windowWithin(n))
          continue;
        if (escapes[v.result].escapes)
          continue;
        batch.push_back({v.siteId,
                         {{"kind", "reservedSpace"},
                          {"offsetLo", off.raw.lo},
                          {"offsetHi", off.raw.hi},
                          {"extent", off.extent},
                          {"n", n}}});
      }

      if (batch.empty())
        break;
      for (const auto &d : batch)
        ed.removeSite("rt-elim", fi, d.siteId, d.why);
    }
  }
}

//===----------------------------------------------------------------------===//
// rdt-elim: allocation-size bounds plus dominated same-base comparisons
//===----------------------------------------------------------------------===//

void passRdtElim(Editor &ed, InstrumentedProgram &ip) {
  for (uint32_t fi = 0; fi < ip.prog.functions.size(); ++fi) {
    Function &f = ip.prog.functions[fi];
    RangeInfo ranges = computeRanges(f, ip.prog);
    DomInfo dom = computeDom(f);
    std::vector<bool> foreign = foreignPointers(f);
    std::vector<SiteView> views = scanSites(f);

    std::vector<bool> activeCastCheck(f.numValues(), false);
    for (const auto &v : views)
      if (v.origin == SiteOrigin::Cast && v.result != kNoValue)
        activeCastCheck[v.result] = true;
    std::vector<AllocSizeFact> sizes =
        computeAllocSizes(ip.prog, f, activeCastCheck);

    auto baseFact = [&](const Operand &base) -> AllocSizeFact {
      if (base.isValue())
        return sizes[base.value];
      if (base.kind == Operand::Kind::Global) {
        const GlobalDef *g = ip.prog.findGlobal(base.sym);
        if (g)
          return {true, false, g->byteSize(ip.prog),
                  SizeProvenance::GlobalArray};
      }
      return {};
    };

    std::set<uint32_t> removed;
    std::vector<OffsetExpr> offsets(views.size());
    for (size_t i = 0; i < views.size(); ++i)
      offsets[i] = siteOffset(views[i], f, ip.prog, ranges);

    // Technique 1: access windows provably inside the base allocation.
    for (size_t i = 0; i < views.size(); ++i) {
      const SiteView &v = views[i];
      if (v.origin == SiteOrigin::Unknown || foreign[v.result])
        continue;
      AllocSizeFact fact = baseFact(v.base);
      const OffsetExpr &off = offsets[i];
      // Lower-bound facts (checked casts) are usable: the real extent is at
      // least fact.bytes.
      if (fact.known && off.windowWithin(fact.bytes)) {
        removed.insert(v.siteId);
        ed.removeSite("rdt-elim", fi, v.siteId,
                      {{"kind", "allocSize"},
                       {"bytes", fact.bytes},
                       {"offsetLo", off.raw.lo},
                       {"offsetHi", off.raw.hi}});
      }
    }

    // Technique 2: a dominating check with the same base orders the offsets.
    struct Drop {
      uint32_t siteId;
      bool underflow;
      nlohmann::json why;
    };
    std::vector<Drop> drops;
    for (size_t ai = 0; ai < views.size(); ++ai) {
      const SiteView &a = views[ai];
      if (a.origin == SiteOrigin::Unknown)
        continue;
      for (size_t bi = 0; bi < views.size(); ++bi) {
        if (ai == bi)
          continue;
        const SiteView &b = views[bi];
        if (b.origin == SiteOrigin::Unknown || removed.count(b.siteId) ||
            foreign[b.result])
          continue;
        if (!sameOperand(a.base, b.base))
          continue;
        if (!dom.instrDominates(a.siteRef, b.siteRef))
          continue;
        RangeInterval nonNeg{0, 0, false, true};
        RangeInterval nonPos{0, 0, true, false};
        auto windowTopBias = [](const OffsetExpr &o) {
          return o.extent > 0 ? o.extent - 1 : 0;
        };
        bool usable = false;
        RangeInterval diffLow =
            offsetDiff(offsets[bi], 0, offsets[ai], 0, usable);
        if (usable && diffLow.subsetOf(nonNeg))
          drops.push_back({b.siteId, true,
                           {{"kind", "dominatorSite"},
                            {"dominator", a.siteId},
                            {"relation", "offsetGE"}}});
        RangeInterval diffHigh =
            offsetDiff(offsets[bi], windowTopBias(offsets[bi]), offsets[ai],
                       windowTopBias(offsets[ai]), usable);
        if (usable && diffHigh.subsetOf(nonPos))
          drops.push_back({b.siteId, false,
                           {{"kind", "dominatorSite"},
                            {"dominator", a.siteId},
                            {"relation", "offsetLE"}}});
      }
    }
    for (const auto &d : drops)
      if (!removed.count(d.siteId))
        ed.dropHalf("rdt-elim", fi, d.siteId, d.underflow, d.why);
  }
}

//===----------------------------------------------------------------------===//
// Pattern mining (whole program, runs before the pipeline)
//===----------------------------------------------------------------------===//

const Instr *defInstr(const Function &f, const Operand &op) {
  if (!op.isValue())
    return nullptr;
  const ValueDef &d = f.valueDefs[op.value];
  return d.kind == ValueDef::Kind::Instr ? &f.instr(d.at) : nullptr;
}

// Chases value-preserving casts to the underlying definition.
const Instr *defThroughCasts(const Function &f, Operand op) {
  const Instr *in = defInstr(f, op);
  while (in && in->op == Opcode::Cast)
    in = defInstr(f, in->args[0]);
  return in;
}

void mineConstantArrayArgs(const Program &p, const CallFacts &calls,
                           std::vector<PatternFact> &out) {
  for (const auto &callee : p.functions) {
    if (calls.addressTaken.count(callee.name))
      continue;
    auto sitesIt = calls.callSites.find(callee.name);
    if (sitesIt == calls.callSites.end() || sitesIt->second.empty())
      continue;

    for (uint32_t pi = 0; pi < callee.params.size(); ++pi) {
      if (!callee.params[pi].type->isPtr())
        continue;
      uint64_t bound = UINT64_MAX;
      bool ok = true;
      for (const CallSiteRef &cs : sitesIt->second) {
        const Function &caller = p.functions[cs.function];
        const Instr &call = caller.instr(cs.at);
        if (pi >= call.args.size()) {
          ok = false;
          break;
        }
        const Operand &arg = call.args[pi];
        uint64_t size = 0;
        if (arg.kind == Operand::Kind::Global) {
          const GlobalDef *g = p.findGlobal(arg.sym);
          size = g ? g->byteSize(p) : 0;
        } else if (arg.isValue()) {
          // Depth-1 rule: accept pointers minted in the caller itself;
          // loaded or forwarded pointers disqualify the argument.
          std::vector<AllocSizeFact> facts =
              computeAllocSizes(p, caller, std::vector<bool>());
          const AllocSizeFact &fact = facts[arg.value];
          if (fact.known && !fact.lowerBound &&
              fact.provenance != SizeProvenance::CheckedCast)
            size = fact.bytes;
        }
        if (size == 0) {
          ok = false;
          break;
        }
        bound = std::min(bound, size);
      }
      if (ok && bound != UINT64_MAX) {
        PatternFact fact;
        fact.kind = PatternFact::Kind::ConstantArrayArg;
        fact.function = callee.name;
        fact.paramIndex = pi;
        fact.boundBytes = bound;
        out.push_back(std::move(fact));
      }
    }
  }
}

void mineLengthPtrAssoc(const Program &p, std::vector<PatternFact> &out) {
  for (const auto &s : p.structs) {
    for (uint32_t pf = 0; pf < s.fields.size(); ++pf) {
      if (!s.fields[pf].type->isPtr())
        continue;
      uint64_t elemSize;
      try {
        elemSize = sizeOf(*s.fields[pf].type->pointee(), p);
      } catch (const LayoutError &) {
        continue;
      }
      if (elemSize == 0)
        continue;
      for (uint32_t lf = 0; lf < s.fields.size(); ++lf) {
        if (lf == pf || !s.fields[lf].type->isInt())
          continue;

        // Gather every store to either field, program-wide.
        struct FieldStore {
          const Function *f;
          const Instr *store;
          Operand object;
        };
        std::vector<FieldStore> ptrStores, lenStores;
        bool analyzable = true;
        for (const auto &f : p.functions) {
          for (const auto &bb : f.blocks) {
            for (const auto &in : bb.instrs) {
              if (in.op != Opcode::Store)
                continue;
              const Instr *addr = defInstr(f, in.args[1]);
              if (!addr || addr->op != Opcode::FieldGep ||
                  addr->type->structName() != s.name)
                continue;
              if (addr->fieldIndex == pf)
                ptrStores.push_back({&f, &in, addr->args[0]});
              else if (addr->fieldIndex == lf)
                lenStores.push_back({&f, &in, addr->args[0]});
            }
          }
        }
        if (ptrStores.empty() || ptrStores.size() != lenStores.size())
          continue;

        // Modifications must pair up in the same function on the same
        // object, and be either {alloc(len*elemSize), len} or {null, 0}.
        for (size_t i = 0; i < ptrStores.size() && analyzable; ++i) {
          const FieldStore &ps = ptrStores[i];
          const FieldStore *match = nullptr;
          for (const auto &ls : lenStores)
            if (ls.f == ps.f && sameOperand(ls.object, ps.object)) {
              match = &ls;
              break;
            }
          if (!match) {
            analyzable = false;
            break;
          }
          const Operand &pv = ps.store->args[0];
          const Operand &lv = match->store->args[0];
          if (pv.isImm() && pv.imm == 0) {
            if (!(lv.isImm() && lv.imm == 0))
              analyzable = false;
            continue;
          }
          const Instr *alloc = defThroughCasts(*ps.f, pv);
          if (!alloc || alloc->op != Opcode::HeapAlloc) {
            analyzable = false;
            break;
          }
          // Allocation argument must syntactically be len * elemSize.
          const Operand &sz = alloc->args[0];
          bool matches = false;
          if (lv.isImm()) {
            matches = sz.isImm() && sz.imm == lv.imm * int64_t(elemSize);
          } else if (sz.isValue()) {
            if (elemSize == 1 && sameOperand(sz, lv)) {
              matches = true;
            } else {
              const Instr *mul = defInstr(*ps.f, sz);
              if (mul && mul->op == Opcode::IntArith &&
                  mul->arith == ArithOp::Mul) {
                const Operand &x = mul->args[0], &y = mul->args[1];
                matches = (sameOperand(x, lv) && y.isImm() &&
                           y.imm == int64_t(elemSize)) ||
                          (sameOperand(y, lv) && x.isImm() &&
                           x.imm == int64_t(elemSize));
              }
            }
          }
          if (!matches)
            analyzable = false;
        }

        if (analyzable) {
          PatternFact fact;
          fact.kind = PatternFact::Kind::LengthPtrAssoc;
          fact.structName = s.name;
          fact.ptrFieldIndex = pf;
          fact.lenFieldIndex = lf;
          fact.elemSize = elemSize;
          out.push_back(std::move(fact));
        }
      }
    }
  }
}

} // namespace

std::vector<PatternFact> minePatterns(const Program &p) {
  std::vector<PatternFact> out;
  CallFacts calls = computeCallFacts(p);
  mineConstantArrayArgs(p, calls, out);
  mineLengthPtrAssoc(p, out);
  return out;
}

namespace {

//===----------------------------------------------------------------------===//
// pattern pass
//===----------------------------------------------------------------------===//

void passPattern(Editor &ed, InstrumentedProgram &ip,
                 const std::vector<PatternFact> &facts) {
  for (const auto &fact : facts) {
    if (fact.kind == PatternFact::Kind::ConstantArrayArg) {
      uint32_t fi = ip.prog.functionIndex(fact.function);
      if (fi == kNoBlock)
        continue;
      Function &f = ip.prog.functions[fi];
      RangeInfo ranges = computeRanges(f, ip.prog);
      std::vector<bool> foreign = foreignPointers(f);
      ValueId param = fact.paramIndex; // params occupy the first value ids
      for (const auto &v : scanSites(f)) {
        if (v.origin == SiteOrigin::Unknown || foreign[v.result])
          continue;
        if (!v.base.isValue() || v.base.value != param)
          continue;
        OffsetExpr off = siteOffset(v, f, ip.prog, ranges);
        if (off.windowWithin(fact.boundBytes))
          ed.removeSite("pattern", fi, v.siteId,
                        {{"kind", "constArrayArg"},
                         {"function", fact.function},
                         {"param", fact.paramIndex},
                         {"bound", fact.boundBytes}});
      }
      continue;
    }

    // LengthPtrAssoc
    for (uint32_t fi = 0; fi < ip.prog.functions.size(); ++fi) {
      Function &f = ip.prog.functions[fi];

      // Any store to either field inside this function invalidates the
      // loaded length for the whole scope.
      bool fieldStores = false;
      for (const auto &bb : f.blocks)
        for (const auto &in : bb.instrs) {
          if (in.op != Opcode::Store)
            continue;
          const Instr *addr = defInstr(f, in.args[1]);
          if (addr && addr->op == Opcode::FieldGep &&
              addr->type->structName() == fact.structName &&
              (addr->fieldIndex == fact.ptrFieldIndex ||
               addr->fieldIndex == fact.lenFieldIndex))
            fieldStores = true;
        }
      if (fieldStores)
        continue;

      RangeInfo ranges = computeRanges(f, ip.prog);
      DomInfo dom = computeDom(f);
      std::vector<bool> foreign = foreignPointers(f);

      for (const auto &v : scanSites(f)) {
        if (v.origin != SiteOrigin::Gep || foreign[v.result])
          continue;
        const Instr &site = f.instr(v.siteRef);
        if (sizeOf(*site.type, ip.prog) != fact.elemSize)
          continue;
        // Base must be a load of the pointer field.
        const Instr *baseLoad = defInstr(f, v.base);
        if (!baseLoad || baseLoad->op != Opcode::Load)
          continue;
        const Instr *baseAddr = defInstr(f, baseLoad->args[0]);
        if (!baseAddr || baseAddr->op != Opcode::FieldGep ||
            baseAddr->type->structName() != fact.structName ||
            baseAddr->fieldIndex != fact.ptrFieldIndex)
          continue;
        Operand object = baseAddr->args[0];

        const Operand &idx = site.args[1];
        if (!idx.isValue())
          continue;
        if (ranges.operandMayWrap(idx) ||
            !ranges.of(idx).subsetOf(RangeInterval{0, 0, false, true}))
          continue; // need a nonnegative index for the underflow side

        // A strict comparison index < length-load guarding the site.
        bool guarded = false;
        for (uint32_t b = 0; b < f.blocks.size() && !guarded; ++b) {
          const Block &bb = f.blocks[b];
          if (bb.instrs.empty())
            continue;
          const Instr &term = bb.instrs.back();
          if (term.op != Opcode::BrIf || !term.args[0].isValue())
            continue;
          const Instr *cmp = defInstr(f, term.args[0]);
          if (!cmp || cmp->op != Opcode::IntArith || !isComparison(cmp->arith))
            continue;
          Operand lenOp;
          bool strictLess = false;
          if ((cmp->arith == ArithOp::Slt || cmp->arith == ArithOp::Ult) &&
              sameOperand(cmp->args[0], idx)) {
            lenOp = cmp->args[1];
            strictLess = true;
          } else if ((cmp->arith == ArithOp::Sgt || cmp->arith == ArithOp::Ugt) &&
                     sameOperand(cmp->args[1], idx)) {
            lenOp = cmp->args[0];
            strictLess = true;
          }
          if (!strictLess)
            continue;
          const Instr *lenLoad = defInstr(f, lenOp);
          if (!lenLoad || lenLoad->op != Opcode::Load)
            continue;
          const Instr *lenAddr = defInstr(f, lenLoad->args[0]);
          if (!lenAddr || lenAddr->op != Opcode::FieldGep ||
              lenAddr->type->structName() != fact.structName ||
              lenAddr->fieldIndex != fact.lenFieldIndex ||
              !sameOperand(lenAddr->args[0], object))
            continue;
          uint32_t trueSucc = term.targets[0];
          if (dom.dominates(trueSucc, v.checkRef.block) && trueSucc != b)
            guarded = true;
        }
        if (guarded)
          ed.removeSite("pattern", fi, v.siteId,
                        {{"kind", "lengthPtrAssoc"},
                         {"struct", fact.structName},
                         {"ptrField", fact.ptrFieldIndex},
                         {"lenField", fact.lenFieldIndex}});
      }
    }
  }
}

//===----------------------------------------------------------------------===//
// dir: one-sided checks from the sign of the offset
//===----------------------------------------------------------------------===//

void passDir(Editor &ed, InstrumentedProgram &ip) {
  RangeInterval nonNeg{0, 0, false, true};
  RangeInterval nonPos{0, 0, true, false};
  for (uint32_t fi = 0; fi < ip.prog.functions.size(); ++fi) {
    Function &f = ip.prog.functions[fi];
    RangeInfo ranges = computeRanges(f, ip.prog);
    std::vector<bool> foreign = foreignPointers(f);
    for (const auto &v : scanSites(f)) {
      if (v.origin == SiteOrigin::Unknown || foreign[v.result])
        continue;
      OffsetExpr off = siteOffset(v, f, ip.prog, ranges);
      if (off.mayWrap)
        continue;
      if ((v.halves & kCheckUnderflow) && off.raw.subsetOf(nonNeg))
        ed.dropHalf("dir", fi, v.siteId, true,
                    {{"kind", "directional"}, {"sign", "nonNegative"}});
      bool topOv = false;
      RangeInterval top = off.top(topOv);
      if ((v.halves & kCheckOverflow) && !topOv && top.subsetOf(nonPos))
        ed.dropHalf("dir", fi, v.siteId, false,
                    {{"kind", "directional"}, {"sign", "nonPositive"}});
    }
  }
}

//===----------------------------------------------------------------------===//
// merge: one extraction per pointer source
//===----------------------------------------------------------------------===//

struct TraceResult {
  enum class Kind { Source, SelfCycle, Fail } kind = Kind::Fail;
  Operand source;
};

TraceResult traceSource(const Function &f, const Operand &op,
                        std::set<ValueId> &onStack) {
  if (!op.isValue())
    return {TraceResult::Kind::Source, op};
  ValueId v = op.value;
  const ValueDef &d = f.valueDefs[v];
  if (d.kind == ValueDef::Kind::Param)
    return {TraceResult::Kind::Source, Operand::val(v)};
  const Instr &in = f.instr(d.at);
  switch (in.op) {
  case Opcode::Gep:
  case Opcode::FieldGep:
  case Opcode::Cast:
    return traceSource(f, in.args[0], onStack);
  case Opcode::Phi: {
    if (!onStack.insert(v).second)
      return {TraceResult::Kind::SelfCycle, {}};
    TraceResult merged;
    bool any = false;
    for (const auto &a : in.args) {
      TraceResult r = traceSource(f, a, onStack);
      if (r.kind == TraceResult::Kind::SelfCycle)
        continue; // back edge through this chain
      if (r.kind == TraceResult::Kind::Fail) {
        onStack.erase(v);
        return r;
      }
      if (!any) {
        merged = r;
        any = true;
      } else if (!sameOperand(merged.source, r.source)) {
        onStack.erase(v);
        return {TraceResult::Kind::Fail, {}};
      }
    }
    onStack.erase(v);
    return any ? merged : TraceResult{TraceResult::Kind::Fail, {}};
  }
  case Opcode::IntToPtr:
    return {TraceResult::Kind::Fail, {}};
  default:
    return {TraceResult::Kind::Source, Operand::val(v)};
  }
}

// True when a free (or a call that may free) can execute between the
// insertion point and the consuming check. Same-block index refinement is
// applied only for straight-line cases; anything on a cycle is conservative.
bool barrierBetween(const Function &f, const DomInfo &dom,
                    const CallFacts &calls, InstrRef ip, InstrRef check) {
  // Forward reachability from ip's block, backward from check's block.
  auto bfs = [&](uint32_t start, bool forward) {
    std::vector<bool> seen(f.blocks.size(), false);
    std::vector<uint32_t> work{start};
    seen[start] = true;
    while (!work.empty()) {
      uint32_t b = work.back();
      work.pop_back();
      const auto &next = forward ? dom.succs[b] : dom.preds[b];
      for (uint32_t s : next)
        if (!seen[s]) {
          seen[s] = true;
          work.push_back(s);
        }
    }
    return seen;
  };
  std::vector<bool> fwd = bfs(ip.block, true);
  std::vector<bool> bwd = bfs(check.block, false);

  bool ipOnCycle = false;
  for (uint32_t s : dom.succs[ip.block]) {
    std::vector<bool> r = bfs(s, true);
    if (r[ip.block])
      ipOnCycle = true;
  }

  for (uint32_t b = 0; b < f.blocks.size(); ++b) {
    if (!fwd[b] || !bwd[b])
      continue;
    for (uint32_t i = 0; i < f.blocks[b].instrs.size(); ++i) {
      const Instr &in = f.blocks[b].instrs[i];
      bool barrier = in.op == Opcode::HeapFree ||
                     (in.op == Opcode::Call && calls.calleeMayFree(in));
      if (!barrier)
        continue;
      if (!ipOnCycle && b == ip.block && b == check.block) {
        if (i >= ip.index && i < check.index)
          return true;
        continue;
      }
      if (!ipOnCycle && b == ip.block && i < ip.index)
        continue;
      if (!ipOnCycle && b == check.block && i >= check.index)
        continue;
      return true;
    }
  }
  return false;
}

void passMerge(Editor &ed, InstrumentedProgram &ip, const CallFacts &calls) {
  for (uint32_t fi = 0; fi < ip.prog.functions.size(); ++fi) {
    Function &f = ip.prog.functions[fi];
    DomInfo dom = computeDom(f);
    std::vector<SiteView> views = scanSites(f);

    std::map<std::string, std::vector<const SiteView *>> groups;
    std::vector<std::string> order;
    for (const auto &v : views) {
      std::set<ValueId> onStack;
      TraceResult r = traceSource(f, v.base, onStack);
      if (r.kind != TraceResult::Kind::Source)
        continue;
      std::string key = operandKey(f, r.source);
      if (!groups.count(key))
        order.push_back(key);
      groups[key].push_back(&v);
    }

    for (const auto &key : order) {
      const auto &members = groups[key];
      if (members.size() < 2)
        continue;

      // Hypothetical insertion point (the merge primitive recomputes it).
      Operand source = members[0]->base; // placeholder; resolve from key
      InstrRef insertAt{0, 0};
      if (key[0] == '%') {
        std::string name = key.substr(1);
        for (ValueId v = 0; v < f.numValues(); ++v)
          if (f.valueNames[v] == name) {
            const ValueDef &d = f.valueDefs[v];
            if (d.kind == ValueDef::Kind::Instr)
              insertAt = {d.at.block, d.at.index + 1};
            source = Operand::val(v);
            break;
          }
      }

      std::vector<const SiteView *> mergeable;
      for (const SiteView *v : members) {
        bool domOk = insertAt.block == v->checkRef.block
                         ? insertAt.index <= v->checkRef.index
                         : dom.dominates(insertAt.block, v->checkRef.block);
        if (!domOk)
          continue;
        if (barrierBetween(f, dom, calls, insertAt, v->checkRef))
          continue;
        mergeable.push_back(v);
      }
      if (mergeable.size() < 2)
        continue;

      // Idempotence: skip when the subset already shares one extraction of
      // this source.
      bool already = true;
      ValueId firstBinding = mergeable.front()->binding;
      for (const SiteView *v : mergeable)
        if (v->binding != firstBinding ||
            !sameOperand(v->extractSource, source))
          already = false;
      if (already)
        continue;

      for (const SiteView *v : mergeable)
        ed.mergeInto("merge", fi, v->siteId, key,
                     {{"kind", "mergedSource"},
                      {"source", key},
                      {"groupSize", mergeable.size()}});
    }
  }
}

} // namespace

//===----------------------------------------------------------------------===//
// Pipeline
//===----------------------------------------------------------------------===//

PipelineResult runPipeline(InstrumentedProgram &ip, const PassConfig &cfg,
                           uint64_t runtimeReservedBytes) {
  if (cfg.reservedBytes != runtimeReservedBytes)
    throw ConfigMismatchError(
        "pass config reserve (" + std::to_string(cfg.reservedBytes) +
        ") differs from runtime reserve (" +
        std::to_string(runtimeReservedBytes) + ")");

  PipelineResult result;
  Editor ed(ip);
  CallFacts calls = computeCallFacts(ip.prog);
  if (cfg.enabled.count("pattern"))
    result.patternFacts = minePatterns(stripChecks(ip.prog));

  for (const std::string &pass : kPassOrder) {
    if (!cfg.enabled.count(pass))
      continue;
    PassStats stats;
    stats.pass = pass;
    stats.before = countStaticChecks(ip);
    if (pass == "rt-elim")
      passRtElim(ed, ip, cfg.reservedBytes);
    else if (pass == "rdt-elim")
      passRdtElim(ed, ip);
    else if (pass == "pattern")
      passPattern(ed, ip, result.patternFacts);
    else if (pass == "dir")
      passDir(ed, ip);
    else if (pass == "merge")
      passMerge(ed, ip, calls);
    stats.after = countStaticChecks(ip);
    result.passStats.push_back(std::move(stats));
  }

  result.log = std::move(ed.log);

  auto violations = validate(ip.prog);
  assert(violations.empty() && "optimization broke the program");
  (void)violations;
  return result;
}

void replayLog(InstrumentedProgram &ip, const EliminationLog &log) {
  Editor ed(ip);
  ed.replay(log);
}

} // namespace sbound
