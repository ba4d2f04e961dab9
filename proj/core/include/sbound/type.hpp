//===- type.hpp - mini-IR type system -------------------------------------===//
//
// Types are immutable and shared. Struct types carry only the struct name;
// field lists and layout live in the Program's struct table, which keeps the
// type graph acyclic (pointers break cycles without recursing into layout).
//
//===----------------------------------------------------------------------===//
#pragma once

#include <cstdint>
#include <memory>
#include <string>

namespace sbound {

enum class TypeKind : uint8_t {
  Void,
  Int,    // i1, i8, i16, i32, i64
  Ptr,
  Struct, // named reference, resolved against Program::structs
  Array,
  Bounds, // internal: result of sb.extract, never written in source types
};

class Type;
using TypeRef = std::shared_ptr<const Type>;

class Type {
public:
  static TypeRef voidTy();
  static TypeRef boundsTy();
  static TypeRef intTy(unsigned bits);
  static TypeRef ptrTo(TypeRef pointee);
  static TypeRef structTy(std::string name);
  static TypeRef arrayTy(TypeRef elem, uint64_t count);

  TypeKind kind() const { return kind_; }
  unsigned bits() const { return bits_; }
  const TypeRef &pointee() const { return inner_; }
  const TypeRef &elem() const { return inner_; }
  uint64_t count() const { return count_; }
  const std::string &structName() const { return name_; }

  bool isVoid() const { return kind_ == TypeKind::Void; }
  bool isInt() const { return kind_ == TypeKind::Int; }
  bool isPtr() const { return kind_ == TypeKind::Ptr; }
  bool isStruct() const { return kind_ == TypeKind::Struct; }
  bool isArray() const { return kind_ == TypeKind::Array; }
  bool isBounds() const { return kind_ == TypeKind::Bounds; }

  bool equals(const Type &other) const;

  /// Textual form as written in IR source, e.g. "i32", "Obj*", "[4 x i64]".
  std::string str() const;

private:
  Type() = default;

  TypeKind kind_ = TypeKind::Void;
  unsigned bits_ = 0;
  TypeRef inner_;     // Ptr pointee / Array element
  uint64_t count_ = 0;
  std::string name_;  // Struct
};

inline bool sameType(const TypeRef &a, const TypeRef &b) {
  if (a == b)
    return true;
  if (!a || !b)
    return false;
  return a->equals(*b);
}

} // namespace sbound
