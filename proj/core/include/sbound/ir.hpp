//===- ir.hpp - mini-IR program representation -----------------------------===//
#pragma once

#include "sbound/type.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbound {

using ValueId = uint32_t;
inline constexpr ValueId kNoValue = 0xffffffffu;
inline constexpr uint32_t kNoBlock = 0xffffffffu;

enum class Opcode : uint8_t {
  HeapAlloc, // %r = alloc %n
  HeapFree,  // free %p
  StackAlloc,// %r = stackalloc <type>
  Gep,       // %r = gep %p, <type>, %i
  FieldGep,  // %r = fieldgep %p, <Struct>, <k>
  Cast,      // %r = cast %p to <type>*
  Load,      // %r = load <type> %p
  Store,     // store <type> %v, %p
  IntArith,  // %r = <arith> <type> %a, %b
  Call,      // %r = call f(%a, ...)  |  call f(...)
  Intrinsic, // memset/memcpy/strcpy/input/print via call syntax
  Br,        // br <label>
  BrIf,      // brif %c, <l1>, <l2>
  Phi,       // %r = phi <type> [%v, <l>], ...
  Ret,       // ret %v | ret
  PtrToInt,  // %r = ptrtoint %p
  IntToPtr,  // %r = inttoptr %v to <type>*
  SbExtract, // sb.extract %b = bounds %p
  SbCheck,   // sb.check %b, %res[+<k>], <uo|u|o>
};

enum class ArithOp : uint8_t {
  Add, Sub, Mul, UDiv, SDiv, URem, SRem, Shl, LShr, AShr, And, Or, Xor,
  // comparisons produce i1
  Eq, Ne, Slt, Sle, Sgt, Sge, Ult, Ule, Ugt, Uge,
};

bool isComparison(ArithOp op);
const char *arithName(ArithOp op);

enum class IntrinsicKind : uint8_t { Memset, Memcpy, Strcpy, Input, Print };

const char *intrinsicName(IntrinsicKind k);
bool lookupIntrinsic(const std::string &name, IntrinsicKind &out);

struct Operand {
  enum class Kind : uint8_t { Value, Imm, Global, Func } kind = Kind::Imm;
  ValueId value = kNoValue;
  int64_t imm = 0;
  std::string sym;

  static Operand val(ValueId v) {
    Operand o;
    o.kind = Kind::Value;
    o.value = v;
    return o;
  }
  static Operand immediate(int64_t v) {
    Operand o;
    o.kind = Kind::Imm;
    o.imm = v;
    return o;
  }
  static Operand global(std::string name) {
    Operand o;
    o.kind = Kind::Global;
    o.sym = std::move(name);
    return o;
  }
  static Operand func(std::string name) {
    Operand o;
    o.kind = Kind::Func;
    o.sym = std::move(name);
    return o;
  }
  bool isValue() const { return kind == Kind::Value; }
  bool isImm() const { return kind == Kind::Imm; }
  bool operator==(const Operand &o) const {
    return kind == o.kind && (kind != Kind::Value || value == o.value) &&
           (kind != Kind::Imm || imm == o.imm) && sym == o.sym;
  }
};

// sb.check halves
inline constexpr uint8_t kCheckUnderflow = 1;
inline constexpr uint8_t kCheckOverflow = 2;
inline constexpr uint8_t kCheckBoth = kCheckUnderflow | kCheckOverflow;

struct Instr {
  Opcode op;
  ValueId result = kNoValue;
  TypeRef type; // gep element / cast target pointee* / load-store/phi type /
                // stackalloc type / fieldgep struct type
  std::vector<Operand> args;
  ArithOp arith = ArithOp::Add;
  IntrinsicKind intrinsic = IntrinsicKind::Memset;
  uint32_t fieldIndex = 0;
  std::string callee;
  std::vector<std::string> labels;  // Br/BrIf targets, Phi incoming labels
  std::vector<uint32_t> targets;    // resolved block indices, parallel to labels

  // SbCheck payload: checked address = args[1] + checkConst
  uint8_t checkHalves = 0;
  int64_t checkConst = 0;
  uint32_t siteId = 0;

  bool isTerminator() const {
    return op == Opcode::Br || op == Opcode::BrIf || op == Opcode::Ret;
  }
};

struct InstrRef {
  uint32_t block = kNoBlock;
  uint32_t index = 0;
  bool valid() const { return block != kNoBlock; }
  bool operator==(const InstrRef &o) const {
    return block == o.block && index == o.index;
  }
};

struct Block {
  std::string label;
  std::vector<Instr> instrs;
};

struct Param {
  std::string name;
  TypeRef type;
};

struct ValueDef {
  enum class Kind : uint8_t { Param, Instr } kind = Kind::Param;
  uint32_t paramIndex = 0;
  InstrRef at;
};

struct Function {
  std::string name;
  std::vector<Param> params;
  TypeRef retType;
  std::vector<Block> blocks;

  // Dense SSA value table: params first, then instruction results.
  std::vector<std::string> valueNames;
  std::vector<TypeRef> valueTypes;
  std::vector<ValueDef> valueDefs;

  uint32_t numValues() const { return uint32_t(valueNames.size()); }
  uint32_t blockIndex(const std::string &label) const;
  const Instr &instr(InstrRef r) const { return blocks[r.block].instrs[r.index]; }
  Instr &instr(InstrRef r) { return blocks[r.block].instrs[r.index]; }
};

struct StructField {
  std::string name;
  TypeRef type;
  uint64_t offset = 0; // multiple of 8 by construction
};

struct StructDef {
  std::string name;
  std::vector<StructField> fields;
  uint64_t size = 0; // multiple of 8
};

struct GlobalDef {
  std::string name;
  TypeRef elem;
  uint64_t count = 0;
  uint64_t byteSize(const struct Program &p) const;
};

struct ProgramMeta {
  std::string expect;                        // ;!expect: header, empty if absent
  std::vector<std::vector<int64_t>> inputs;  // ;!input: lines
  std::vector<std::string> tags;             // ;!tags: entries
};

struct Program {
  std::vector<StructDef> structs;
  std::vector<GlobalDef> globals;
  std::vector<Function> functions;
  ProgramMeta meta;

  const StructDef *findStruct(const std::string &name) const;
  const GlobalDef *findGlobal(const std::string &name) const;
  const Function *findFunction(const std::string &name) const;
  uint32_t functionIndex(const std::string &name) const;
};

/// Byte size of a type. Struct sizes come from the program's struct table;
/// i1 occupies one byte when stored. Throws LayoutError for void/bounds.
uint64_t sizeOf(const Type &t, const Program &p);
inline uint64_t sizeOf(const TypeRef &t, const Program &p) { return sizeOf(*t, p); }

inline uint64_t roundUp8(uint64_t n) { return (n + 7) & ~uint64_t(7); }

/// Recomputes field offsets and total size for a struct definition.
void layoutStruct(StructDef &def, const Program &p);

class LayoutError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Per-value "foreign" flags: pointers derived from inttoptr. Foreign
/// pointers are always fully checked and never justify an elimination.
std::vector<bool> foreignPointers(const Function &f);

/// Field-by-field structural equality (names included).
bool structurallyEqual(const Program &a, const Program &b);

} // namespace sbound
