#include "sbound/ir.hpp"

#include <algorithm>

namespace sbound {

bool isComparison(ArithOp op) { return op >= ArithOp::Eq; }

const char *arithName(ArithOp op) {
  switch (op) {
  case ArithOp::Add: return "add";
  case ArithOp::Sub: return "sub";
  case ArithOp::Mul: return "mul";
  case ArithOp::UDiv: return "udiv";
  case ArithOp::SDiv: return "sdiv";
  case ArithOp::URem: return "urem";
  case ArithOp::SRem: return "srem";
  case ArithOp::Shl: return "shl";
  case ArithOp::LShr: return "lshr";
  case ArithOp::AShr: return "ashr";
  case ArithOp::And: return "and";
  case ArithOp::Or: return "or";
  case ArithOp::Xor: return "xor";
  case ArithOp::Eq: return "eq";
  case ArithOp::Ne: return "ne";
  case ArithOp::Slt: return "slt";
  case ArithOp::Sle: return "sle";
  case ArithOp::Sgt: return "sgt";
  case ArithOp::Sge: return "sge";
  case ArithOp::Ult: return "ult";
  case ArithOp::Ule: return "ule";
  case ArithOp::Ugt: return "ugt";
  case ArithOp::Uge: return "uge";
  }
  return "?";
}

const char *intrinsicName(IntrinsicKind k) {
  switch (k) {
  case IntrinsicKind::Memset: return "memset";
  case IntrinsicKind::Memcpy: return "memcpy";
  case IntrinsicKind::Strcpy: return "strcpy";
  case IntrinsicKind::Input: return "input";
  case IntrinsicKind::Print: return "print";
  }
  return "?";
}

bool lookupIntrinsic(const std::string &name, IntrinsicKind &out) {
  if (name == "memset") { out = IntrinsicKind::Memset; return true; }
  if (name == "memcpy") { out = IntrinsicKind::Memcpy; return true; }
  if (name == "strcpy") { out = IntrinsicKind::Strcpy; return true; }
  if (name == "input") { out = IntrinsicKind::Input; return true; }
  if (name == "print") { out = IntrinsicKind::Print; return true; }
  return false;
}

uint32_t Function::blockIndex(const std::string &label) const {
  for (uint32_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].label == label)
      return i;
  return kNoBlock;
}

uint64_t GlobalDef::byteSize(const Program &p) const {
  return count * sizeOf(*elem, p);
}

const StructDef *Program::findStruct(const std::string &name) const {
  for (const auto &s : structs)
    if (s.name == name)
      return &s;
  return nullptr;
}

const GlobalDef *Program::findGlobal(const std::string &name) const {
  for (const auto &g : globals)
    if (g.name == name)
      return &g;
  return nullptr;
}

const Function *Program::findFunction(const std::string &name) const {
  for (const auto &f : functions)
    if (f.name == name)
      return &f;
  return nullptr;
}

uint32_t Program::functionIndex(const std::string &name) const {
  for (uint32_t i = 0; i < functions.size(); ++i)
    if (functions[i].name == name)
      return i;
  return kNoBlock;
}

uint64_t sizeOf(const Type &t, const Program &p) {
  switch (t.kind()) {
  case TypeKind::Void:
  case TypeKind::Bounds:
    throw LayoutError("sizeOf undefined for " + t.str());
  case TypeKind::Int:
    return t.bits() <= 8 ? 1 : t.bits() / 8;
  case TypeKind::Ptr:
    return 8;
  case TypeKind::Array:
    return t.count() * sizeOf(*t.elem(), p);
  case TypeKind::Struct: {
    const StructDef *def = p.findStruct(t.structName());
    if (!def)
      throw LayoutError("unknown struct " + t.structName());
    return def->size;
  }
  }
  throw LayoutError("unreachable");
}

void layoutStruct(StructDef &def, const Program &p) {
  uint64_t offset = 0;
  for (auto &field : def.fields) {
    field.offset = offset;
    offset += roundUp8(sizeOf(*field.type, p));
  }
  def.size = offset;
}

std::vector<bool> foreignPointers(const Function &f) {
  std::vector<bool> foreign(f.numValues(), false);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto &bb : f.blocks) {
      for (const auto &in : bb.instrs) {
        if (in.result == kNoValue)
          continue;
        bool tainted = false;
        switch (in.op) {
        case Opcode::IntToPtr:
          tainted = true;
          break;
        case Opcode::Gep:
        case Opcode::FieldGep:
        case Opcode::Cast:
          tainted = !in.args.empty() && in.args[0].isValue() &&
                    foreign[in.args[0].value];
          break;
        case Opcode::Phi:
          for (const auto &a : in.args)
            if (a.isValue() && foreign[a.value])
              tainted = true;
          break;
        default:
          break;
        }
        if (tainted && !foreign[in.result]) {
          foreign[in.result] = true;
          changed = true;
        }
      }
    }
  }
  return foreign;
}

namespace {

bool sameInstr(const Instr &a, const Instr &b) {
  return a.op == b.op && a.result == b.result && sameType(a.type, b.type) &&
         a.args == b.args && a.arith == b.arith && a.intrinsic == b.intrinsic &&
         a.fieldIndex == b.fieldIndex && a.callee == b.callee &&
         a.labels == b.labels && a.checkHalves == b.checkHalves &&
         a.checkConst == b.checkConst;
}

bool sameFunction(const Function &a, const Function &b) {
  if (a.name != b.name || a.params.size() != b.params.size() ||
      !sameType(a.retType, b.retType) || a.blocks.size() != b.blocks.size() ||
      a.valueNames != b.valueNames)
    return false;
  for (size_t i = 0; i < a.params.size(); ++i)
    if (a.params[i].name != b.params[i].name ||
        !sameType(a.params[i].type, b.params[i].type))
      return false;
  for (size_t i = 0; i < a.blocks.size(); ++i) {
    if (a.blocks[i].label != b.blocks[i].label ||
        a.blocks[i].instrs.size() != b.blocks[i].instrs.size())
      return false;
    for (size_t j = 0; j < a.blocks[i].instrs.size(); ++j)
      if (!sameInstr(a.blocks[i].instrs[j], b.blocks[i].instrs[j]))
        return false;
  }
  return true;
}

} // namespace

bool structurallyEqual(const Program &a, const Program &b) {
  if (a.structs.size() != b.structs.size() ||
      a.globals.size() != b.globals.size() ||
      a.functions.size() != b.functions.size())
    return false;
  for (size_t i = 0; i < a.structs.size(); ++i) {
    const auto &sa = a.structs[i], &sb = b.structs[i];
    if (sa.name != sb.name || sa.size != sb.size ||
        sa.fields.size() != sb.fields.size())
      return false;
    for (size_t j = 0; j < sa.fields.size(); ++j)
      if (sa.fields[j].name != sb.fields[j].name ||
          sa.fields[j].offset != sb.fields[j].offset ||
          !sameType(sa.fields[j].type, sb.fields[j].type))
        return false;
  }
  for (size_t i = 0; i < a.globals.size(); ++i)
    if (a.globals[i].name != b.globals[i].name ||
        a.globals[i].count != b.globals[i].count ||
        !sameType(a.globals[i].elem, b.globals[i].elem))
      return false;
  for (size_t i = 0; i < a.functions.size(); ++i)
    if (!sameFunction(a.functions[i], b.functions[i]))
      return false;
  return a.meta.expect == b.meta.expect && a.meta.inputs == b.meta.inputs &&
         a.meta.tags == b.meta.tags;
}

} // namespace sbound
