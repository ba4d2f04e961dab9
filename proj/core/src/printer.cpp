#include "sbound/printer.hpp"

#include <sstream>

namespace sbound {

namespace {

std::string operandStr(const Operand &op, const Function &f) {
  switch (op.kind) {
  case Operand::Kind::Value:
    return "%" + f.valueNames[op.value];
  case Operand::Kind::Imm:
    return std::to_string(op.imm);
  case Operand::Kind::Global:
  case Operand::Kind::Func:
    return "@" + op.sym;
  }
  return "?";
}

} // namespace

std::string printInstr(const Instr &in, const Function &f) {
  std::ostringstream os;
  auto opnd = [&](size_t i) { return operandStr(in.args[i], f); };
  auto res = [&] { return "%" + f.valueNames[in.result] + " = "; };

  switch (in.op) {
  case Opcode::HeapAlloc:
    os << res() << "alloc " << opnd(0);
    break;
  case Opcode::HeapFree:
    os << "free " << opnd(0);
    break;
  case Opcode::StackAlloc:
    os << res() << "stackalloc " << in.type->str();
    break;
  case Opcode::Gep:
    os << res() << "gep " << opnd(0) << ", " << in.type->str() << ", "
       << opnd(1);
    break;
  case Opcode::FieldGep:
    os << res() << "fieldgep " << opnd(0) << ", " << in.type->structName()
       << ", " << in.fieldIndex;
    break;
  case Opcode::Cast:
    os << res() << "cast " << opnd(0) << " to " << in.type->str();
    break;
  case Opcode::Load:
    os << res() << "load " << in.type->str() << " " << opnd(0);
    break;
  case Opcode::Store:
    os << "store " << in.type->str() << " " << opnd(0) << ", " << opnd(1);
    break;
  case Opcode::IntArith:
    os << res() << arithName(in.arith) << " " << in.type->str() << " "
       << opnd(0) << ", " << opnd(1);
    break;
  case Opcode::Call:
  case Opcode::Intrinsic: {
    if (in.result != kNoValue)
      os << res();
    os << "call ";
    size_t firstArg = 0;
    if (in.op == Opcode::Intrinsic) {
      os << intrinsicName(in.intrinsic);
    } else if (!in.callee.empty()) {
      os << in.callee;
    } else {
      os << opnd(0);
      firstArg = 1;
    }
    os << "(";
    for (size_t i = firstArg; i < in.args.size(); ++i) {
      if (i != firstArg)
        os << ", ";
      os << opnd(i);
    }
    os << ")";
    break;
  }
  case Opcode::Br:
    os << "br " << in.labels[0];
    break;
  case Opcode::BrIf:
    os << "brif " << opnd(0) << ", " << in.labels[0] << ", " << in.labels[1];
    break;
  case Opcode::Phi:
    os << res() << "phi " << in.type->str();
    for (size_t i = 0; i < in.args.size(); ++i)
      os << (i ? ", [" : " [") << opnd(i) << ", " << in.labels[i] << "]";
    break;
  case Opcode::Ret:
    os << "ret";
    if (!in.args.empty())
      os << " " << opnd(0);
    break;
  case Opcode::PtrToInt:
    os << res() << "ptrtoint " << opnd(0);
    break;
  case Opcode::IntToPtr:
    os << res() << "inttoptr " << opnd(0) << " to " << in.type->str();
    break;
  case Opcode::SbExtract:
    os << "sb.extract " << "%" << f.valueNames[in.result] << " = bounds "
       << opnd(0);
    break;
  case Opcode::SbCheck:
    os << "sb.check " << opnd(0) << ", " << opnd(1);
    if (in.checkConst != 0)
      os << "+" << in.checkConst;
    os << ", "
       << (in.checkHalves == kCheckBoth
               ? "uo"
               : in.checkHalves == kCheckUnderflow ? "u" : "o");
    break;
  }
  return os.str();
}

std::string printProgram(const Program &p) {
  std::ostringstream os;
  if (!p.meta.expect.empty())
    os << ";!expect: " << p.meta.expect << "\n";
  for (const auto &input : p.meta.inputs) {
    os << ";!input:";
    for (int64_t v : input)
      os << " " << v;
    os << "\n";
  }
  if (!p.meta.tags.empty()) {
    os << ";!tags:";
    for (const auto &t : p.meta.tags)
      os << " " << t;
    os << "\n";
  }
  for (const auto &s : p.structs) {
    os << "struct " << s.name << " { ";
    for (size_t i = 0; i < s.fields.size(); ++i) {
      if (i)
        os << ", ";
      os << s.fields[i].name << ": " << s.fields[i].type->str();
    }
    os << " }\n";
  }
  for (const auto &g : p.globals)
    os << "global " << g.name << ": [" << g.count << " x " << g.elem->str()
       << "]\n";
  for (const auto &f : p.functions) {
    os << "fn " << f.name << "(";
    for (size_t i = 0; i < f.params.size(); ++i) {
      if (i)
        os << ", ";
      os << "%" << f.params[i].name << ": " << f.params[i].type->str();
    }
    os << ")";
    if (!f.retType->isVoid())
      os << " -> " << f.retType->str();
    os << " {\n";
    for (const auto &bb : f.blocks) {
      os << bb.label << ":\n";
      for (const auto &in : bb.instrs)
        os << "  " << printInstr(in, f) << "\n";
    }
    os << "}\n";
  }
  return os.str();
}

} // namespace sbound
