#include "sbound/instrument.hpp"
#include "sbound/parser.hpp"

#include <cassert>
#include <set>
#include <stdexcept>

namespace sbound {

void reindexFunction(Function &f) {
  for (uint32_t b = 0; b < f.blocks.size(); ++b) {
    for (uint32_t i = 0; i < f.blocks[b].instrs.size(); ++i) {
      const Instr &in = f.blocks[b].instrs[i];
      if (in.result != kNoValue) {
        f.valueDefs[in.result].kind = ValueDef::Kind::Instr;
        f.valueDefs[in.result].at = {b, i};
      }
    }
  }
}

bool hasChecks(const Program &p) {
  for (const auto &f : p.functions)
    for (const auto &bb : f.blocks)
      for (const auto &in : bb.instrs)
        if (in.op == Opcode::SbExtract || in.op == Opcode::SbCheck)
          return true;
  return false;
}

namespace {

ValueId addValue(Function &f, std::set<std::string> &names,
                 const std::string &base, TypeRef type) {
  std::string name = base;
  for (int i = 1; names.count(name); ++i)
    name = base + "." + std::to_string(i);
  names.insert(name);
  ValueId id = f.numValues();
  f.valueNames.push_back(name);
  f.valueTypes.push_back(std::move(type));
  f.valueDefs.push_back(ValueDef{});
  return id;
}

/// Access extent for a gep/fieldgep: the element size when the result feeds
/// a load or store of the element type, else zero (the check then guards the
/// computed address only).
uint64_t accessExtent(const Function &f, const Program &p, ValueId result,
                      const TypeRef &pointee) {
  for (const auto &bb : f.blocks) {
    for (const auto &in : bb.instrs) {
      if (in.op == Opcode::Load && in.args[0].isValue() &&
          in.args[0].value == result && sameType(in.type, pointee))
        return sizeOf(*in.type, p);
      if (in.op == Opcode::Store && in.args[1].isValue() &&
          in.args[1].value == result && sameType(in.type, pointee))
        return sizeOf(*in.type, p);
    }
  }
  return 0;
}

} // namespace

InstrumentedProgram instrument(const Program &p) {
  if (hasChecks(p))
    throw std::invalid_argument("program is already instrumented");

  InstrumentedProgram ip;
  ip.prog = p;
  uint32_t nextSite = 0;

  for (uint32_t fi = 0; fi < ip.prog.functions.size(); ++fi) {
    Function &f = ip.prog.functions[fi];
    std::set<std::string> names(f.valueNames.begin(), f.valueNames.end());

    for (auto &bb : f.blocks) {
      std::vector<Instr> out;
      out.reserve(bb.instrs.size());
      for (auto &in : bb.instrs) {
        SiteOrigin origin = SiteOrigin::Unknown;
        uint64_t extent = 0;
        switch (in.op) {
        case Opcode::Gep:
          origin = SiteOrigin::Gep;
          extent = accessExtent(f, ip.prog, in.result, in.type);
          break;
        case Opcode::FieldGep: {
          origin = SiteOrigin::FieldGep;
          TypeRef pointee = f.valueTypes[in.result]->pointee();
          extent = accessExtent(f, ip.prog, in.result, pointee);
          break;
        }
        case Opcode::Cast:
          if (!in.type->pointee()->isVoid()) {
            origin = SiteOrigin::Cast;
            extent = sizeOf(*in.type->pointee(), ip.prog);
          }
          break;
        default:
          break;
        }

        if (origin == SiteOrigin::Unknown) {
          out.push_back(std::move(in));
          continue;
        }

        uint32_t id = nextSite++;
        ValueId binding = addValue(f, names, "sb" + std::to_string(id),
                                   Type::boundsTy());

        Instr extract;
        extract.op = Opcode::SbExtract;
        extract.result = binding;
        extract.args.push_back(in.args[0]); // base pointer
        out.push_back(std::move(extract));

        Instr check;
        check.op = Opcode::SbCheck;
        check.args.push_back(Operand::val(binding));
        check.args.push_back(Operand::val(in.result));
        check.checkConst = int64_t(extent);
        check.checkHalves = kCheckBoth;
        check.siteId = id;

        out.push_back(std::move(in));
        out.push_back(std::move(check));

        ip.sites.push_back(SiteRecord{id, fi, origin, true, ""});
      }
      bb.instrs = std::move(out);
    }
    reindexFunction(f);
  }

  auto violations = validate(ip.prog);
  assert(violations.empty() && "instrumentation broke the program");
  (void)violations;
  return ip;
}

InstrumentedProgram adoptInstrumented(Program p) {
  InstrumentedProgram ip;
  ip.prog = std::move(p);
  uint32_t next = 0;
  for (uint32_t fi = 0; fi < ip.prog.functions.size(); ++fi) {
    Function &f = ip.prog.functions[fi];
    for (uint32_t b = 0; b < f.blocks.size(); ++b) {
      for (uint32_t i = 0; i < f.blocks[b].instrs.size(); ++i) {
        Instr &in = f.blocks[b].instrs[i];
        if (in.op != Opcode::SbCheck)
          continue;
        in.siteId = next;
        SiteOrigin origin = SiteOrigin::Unknown;
        if (in.args[1].isValue()) {
          const ValueDef &def = f.valueDefs[in.args[1].value];
          if (def.kind == ValueDef::Kind::Instr) {
            switch (f.instr(def.at).op) {
            case Opcode::Gep: origin = SiteOrigin::Gep; break;
            case Opcode::FieldGep: origin = SiteOrigin::FieldGep; break;
            case Opcode::Cast: origin = SiteOrigin::Cast; break;
            default: break;
            }
          }
        }
        ip.sites.push_back(SiteRecord{next, fi, origin, true, ""});
        ++next;
      }
    }
  }
  return ip;
}

StaticCheckStats countStaticChecks(const InstrumentedProgram &ip) {
  StaticCheckStats s;
  s.sites = ip.sites.size();
  for (const auto &f : ip.prog.functions) {
    for (const auto &bb : f.blocks) {
      for (const auto &in : bb.instrs) {
        if (in.op == Opcode::SbCheck) {
          ++s.activeSites;
          s.activeHalves += (in.checkHalves & kCheckUnderflow ? 1 : 0) +
                            (in.checkHalves & kCheckOverflow ? 1 : 0);
        } else if (in.op == Opcode::SbExtract) {
          ++s.extractions;
        }
      }
    }
  }
  return s;
}

Program stripChecks(const Program &p) {
  Program out = p;
  for (auto &f : out.functions) {
    for (auto &bb : f.blocks) {
      std::vector<Instr> kept;
      kept.reserve(bb.instrs.size());
      for (auto &in : bb.instrs)
        if (in.op != Opcode::SbExtract && in.op != Opcode::SbCheck)
          kept.push_back(std::move(in));
      bb.instrs = std::move(kept);
    }
    reindexFunction(f);
  }
  return out;
}

} // namespace sbound
