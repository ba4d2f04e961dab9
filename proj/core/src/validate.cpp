#include "sbound/analysis.hpp"
#include "sbound/parser.hpp"

#include <set>
#include <sstream>

namespace sbound {

namespace {

class Validator {
public:
  explicit Validator(const Program &p) : p_(p) {}

  std::vector<std::string> run() {
    for (const auto &f : p_.functions)
      checkFunction(f);
    return std::move(violations_);
  }

private:
  void report(const std::string &msg) { violations_.push_back(msg); }

  std::string at(const Function &f, uint32_t block) {
    return f.name + "/" + f.blocks[block].label;
  }

  TypeRef operandType(const Function &f, const Operand &op) {
    switch (op.kind) {
    case Operand::Kind::Value:
      return f.valueTypes[op.value];
    case Operand::Kind::Imm:
      return Type::intTy(64);
    case Operand::Kind::Global: {
      const GlobalDef *g = p_.findGlobal(op.sym);
      return g ? Type::ptrTo(g->elem) : nullptr;
    }
    case Operand::Kind::Func:
      return p_.findFunction(op.sym) ? Type::ptrTo(Type::intTy(8)) : nullptr;
    }
    return nullptr;
  }

  bool pointerOperand(const Function &f, const Operand &op) {
    // Immediates are permitted where pointers are expected (null and
    // test-forged addresses); everything else must be pointer typed.
    if (op.isImm())
      return true;
    TypeRef t = operandType(f, op);
    return t && t->isPtr();
  }

  bool intOperand(const Function &f, const Operand &op) {
    if (op.isImm())
      return true;
    TypeRef t = operandType(f, op);
    return t && t->isInt();
  }

  void checkFunction(const Function &f) {
    if (f.blocks.empty()) {
      report("empty function " + f.name);
      return;
    }

    // Block shape: exactly one terminator, at the end; phis first.
    for (uint32_t b = 0; b < f.blocks.size(); ++b) {
      const Block &bb = f.blocks[b];
      if (bb.instrs.empty() || !bb.instrs.back().isTerminator()) {
        report("missing terminator in " + at(f, b));
      }
      bool sawNonPhi = false;
      for (uint32_t i = 0; i < bb.instrs.size(); ++i) {
        const Instr &in = bb.instrs[i];
        if (in.isTerminator() && i + 1 != bb.instrs.size())
          report("terminator not at end of " + at(f, b));
        if (in.op == Opcode::Phi) {
          if (sawNonPhi)
            report("phi after non-phi in " + at(f, b));
        } else {
          sawNonPhi = true;
        }
      }
    }

    DomInfo dom = computeDom(f);

    for (uint32_t b = 0; b < f.blocks.size(); ++b)
      if (!dom.reachable[b])
        report("unreachable block " + at(f, b));

    checkReducible(f, dom);
    checkUseDef(f, dom);

    for (uint32_t b = 0; b < f.blocks.size(); ++b)
      for (uint32_t i = 0; i < f.blocks[b].instrs.size(); ++i)
        checkInstr(f, dom, {b, i});
  }

  // Every retreating edge must target a dominator of its source; otherwise
  // the CFG is irreducible and range analysis would be unsound.
  void checkReducible(const Function &f, const DomInfo &dom) {
    uint32_t n = uint32_t(f.blocks.size());
    std::vector<uint32_t> disc(n, 0), fin(n, 0);
    uint32_t clock = 1;
    std::vector<std::pair<uint32_t, size_t>> stack;
    std::vector<bool> seen(n, false);
    seen[0] = true;
    disc[0] = clock++;
    stack.push_back({0, 0});
    while (!stack.empty()) {
      auto &[b, next] = stack.back();
      if (next < dom.succs[b].size()) {
        uint32_t s = dom.succs[b][next++];
        if (!seen[s]) {
          seen[s] = true;
          disc[s] = clock++;
          stack.push_back({s, 0});
        }
      } else {
        fin[b] = clock++;
        stack.pop_back();
      }
    }
    bool bad = false;
    for (uint32_t b = 0; b < n && !bad; ++b) {
      for (uint32_t s : dom.succs[b]) {
        bool retreating = disc[s] <= disc[b] && fin[b] <= fin[s];
        if (retreating && !dom.dominates(s, b)) {
          bad = true;
          break;
        }
      }
    }
    if (bad)
      report("irreducible control flow in " + f.name);
  }

  void checkUseDef(const Function &f, const DomInfo &dom) {
    for (uint32_t b = 0; b < f.blocks.size(); ++b) {
      if (!dom.reachable[b])
        continue;
      const Block &bb = f.blocks[b];
      for (uint32_t i = 0; i < bb.instrs.size(); ++i) {
        const Instr &in = bb.instrs[i];
        for (size_t a = 0; a < in.args.size(); ++a) {
          const Operand &op = in.args[a];
          if (!op.isValue())
            continue;
          const ValueDef &def = f.valueDefs[op.value];
          if (def.kind == ValueDef::Kind::Param)
            continue;
          InstrRef use{b, i};
          if (in.op == Opcode::Phi) {
            // phi uses happen at the end of the incoming block
            uint32_t pred = in.targets[a];
            use = {pred, uint32_t(f.blocks[pred].instrs.size())};
          }
          bool ok = def.at.block == use.block ? def.at.index < use.index
                                              : dom.dominates(def.at.block,
                                                              use.block);
          if (!ok)
            report("use before def: %" + f.valueNames[op.value] + " in " +
                   at(f, b));
        }
      }
    }
  }

  void checkInstr(const Function &f, const DomInfo &dom, InstrRef ref) {
    const Instr &in = f.instr(ref);
    const std::string where = at(f, ref.block);
    auto expectArgs = [&](size_t n) {
      if (in.args.size() != n) {
        report("bad operand count in " + where);
        return false;
      }
      return true;
    };

    // Symbol operands must resolve.
    for (const auto &op : in.args) {
      if (op.kind == Operand::Kind::Func && !p_.findFunction(op.sym) &&
          !p_.findGlobal(op.sym))
        report("unknown symbol @" + op.sym + " in " + where);
    }

    // Bounds values may only feed sb.check operand 0.
    for (size_t a = 0; a < in.args.size(); ++a) {
      const Operand &op = in.args[a];
      if (op.isValue() && f.valueTypes[op.value]->isBounds() &&
          !(in.op == Opcode::SbCheck && a == 0))
        report("bounds value %" + f.valueNames[op.value] +
               " used outside sb.check in " + where);
    }

    switch (in.op) {
    case Opcode::HeapAlloc:
      if (expectArgs(1) && !intOperand(f, in.args[0]))
        report("alloc size must be an integer in " + where);
      break;
    case Opcode::HeapFree:
      if (expectArgs(1) && !pointerOperand(f, in.args[0]))
        report("free operand must be a pointer in " + where);
      break;
    case Opcode::StackAlloc:
      if (in.type->isVoid() || in.type->isBounds())
        report("stackalloc of non-storable type in " + where);
      break;
    case Opcode::Gep:
      if (expectArgs(2)) {
        if (!pointerOperand(f, in.args[0]))
          report("gep base must be a pointer in " + where);
        if (!intOperand(f, in.args[1]))
          report("gep index must be an integer in " + where);
      }
      break;
    case Opcode::FieldGep:
      if (expectArgs(1)) {
        const Operand &base = in.args[0];
        TypeRef t = base.isImm() ? nullptr : operandType(f, base);
        if (!base.isImm() &&
            (!t || !t->isPtr() || !t->pointee()->isStruct() ||
             t->pointee()->structName() != in.type->structName()))
          report("fieldgep base must be " + in.type->structName() + "* in " +
                 where);
      }
      break;
    case Opcode::Cast:
      if (expectArgs(1) && !pointerOperand(f, in.args[0]))
        report("cast source must be a pointer in " + where);
      break;
    case Opcode::Load: {
      if (!expectArgs(1))
        break;
      if (!in.type->isInt() && !in.type->isPtr())
        report("load of non-scalar type in " + where);
      const Operand &addr = in.args[0];
      if (!addr.isImm()) {
        TypeRef t = operandType(f, addr);
        if (!t || !t->isPtr() || !sameType(t->pointee(), in.type))
          report("load address must be " + in.type->str() + "* in " + where);
      }
      break;
    }
    case Opcode::Store: {
      if (!expectArgs(2))
        break;
      if (!in.type->isInt() && !in.type->isPtr())
        report("store of non-scalar type in " + where);
      const Operand &val = in.args[0];
      if (val.isValue() && !sameType(f.valueTypes[val.value], in.type) &&
          !(in.type->isPtr() && f.valueTypes[val.value]->isPtr()))
        report("stored value type mismatch in " + where);
      const Operand &addr = in.args[1];
      if (!addr.isImm()) {
        TypeRef t = operandType(f, addr);
        if (!t || !t->isPtr() || !sameType(t->pointee(), in.type))
          report("store address must be " + in.type->str() + "* in " + where);
      }
      break;
    }
    case Opcode::IntArith:
      if (expectArgs(2)) {
        for (const auto &op : in.args)
          if (!intOperand(f, op))
            report("arithmetic on non-integer in " + where);
      }
      break;
    case Opcode::Call: {
      if (!in.callee.empty()) {
        const Function *callee = p_.findFunction(in.callee);
        if (!callee) {
          report("unknown function " + in.callee + " in " + where);
          break;
        }
        if (in.args.size() != callee->params.size())
          report("call arity mismatch for " + in.callee + " in " + where);
      } else if (in.args.empty() || !pointerOperand(f, in.args[0])) {
        report("indirect callee must be a pointer in " + where);
      }
      break;
    }
    case Opcode::Intrinsic: {
      size_t want = 0;
      switch (in.intrinsic) {
      case IntrinsicKind::Memset:
      case IntrinsicKind::Memcpy:
        want = 3;
        break;
      case IntrinsicKind::Strcpy:
        want = 2;
        break;
      case IntrinsicKind::Input:
      case IntrinsicKind::Print:
        want = 1;
        break;
      }
      if (in.args.size() != want)
        report(std::string("bad arity for ") + intrinsicName(in.intrinsic) +
               " in " + where);
      break;
    }
    case Opcode::Br:
      break;
    case Opcode::BrIf:
      if (expectArgs(1) && !intOperand(f, in.args[0]))
        report("brif condition must be an integer in " + where);
      break;
    case Opcode::Phi: {
      if (in.args.empty()) {
        report("empty phi in " + where);
        break;
      }
      std::multiset<uint32_t> incoming(in.targets.begin(), in.targets.end());
      std::multiset<uint32_t> preds(dom.preds[ref.block].begin(),
                                    dom.preds[ref.block].end());
      if (incoming != preds)
        report("phi incoming labels mismatch preds in " + where);
      break;
    }
    case Opcode::Ret: {
      bool wantValue = !f.retType->isVoid();
      if (wantValue != !in.args.empty())
        report("return value mismatch in " + where);
      break;
    }
    case Opcode::PtrToInt:
      if (expectArgs(1) && !pointerOperand(f, in.args[0]))
        report("ptrtoint operand must be a pointer in " + where);
      break;
    case Opcode::IntToPtr:
      if (expectArgs(1) && !intOperand(f, in.args[0]))
        report("inttoptr operand must be an integer in " + where);
      break;
    case Opcode::SbExtract:
      if (expectArgs(1) && !pointerOperand(f, in.args[0]))
        report("sb.extract source must be a pointer in " + where);
      break;
    case Opcode::SbCheck: {
      if (!expectArgs(2))
        break;
      const Operand &b = in.args[0];
      if (!b.isValue() || !f.valueTypes[b.value]->isBounds())
        report("sb.check binding must be a bounds value in " + where);
      if (!pointerOperand(f, in.args[1]))
        report("sb.check result must be a pointer in " + where);
      if (in.checkHalves == 0)
        report("sb.check with no halves in " + where);
      break;
    }
    }
  }

  const Program &p_;
  std::vector<std::string> violations_;
};

} // namespace

std::vector<std::string> validate(const Program &p) {
  return Validator(p).run();
}

} // namespace sbound
