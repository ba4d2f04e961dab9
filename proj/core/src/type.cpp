#include "sbound/type.hpp"

namespace sbound {

TypeRef Type::voidTy() {
  static TypeRef t = TypeRef(new Type());
  return t;
}

TypeRef Type::boundsTy() {
  static TypeRef t = [] {
    auto *raw = new Type();
    raw->kind_ = TypeKind::Bounds;
    return TypeRef(raw);
  }();
  return t;
}

TypeRef Type::intTy(unsigned bits) {
  auto *raw = new Type();
  raw->kind_ = TypeKind::Int;
  raw->bits_ = bits;
  return TypeRef(raw);
}

TypeRef Type::ptrTo(TypeRef pointee) {
  auto *raw = new Type();
  raw->kind_ = TypeKind::Ptr;
  raw->inner_ = std::move(pointee);
  return TypeRef(raw);
}

TypeRef Type::structTy(std::string name) {
  auto *raw = new Type();
  raw->kind_ = TypeKind::Struct;
  raw->name_ = std::move(name);
  return TypeRef(raw);
}

TypeRef Type::arrayTy(TypeRef elem, uint64_t count) {
  auto *raw = new Type();
  raw->kind_ = TypeKind::Array;
  raw->inner_ = std::move(elem);
  raw->count_ = count;
  return TypeRef(raw);
}

bool Type::equals(const Type &other) const {
  if (kind_ != other.kind_)
    return false;
  switch (kind_) {
  case TypeKind::Void:
  case TypeKind::Bounds:
    return true;
  case TypeKind::Int:
    return bits_ == other.bits_;
  case TypeKind::Ptr:
    return inner_->equals(*other.inner_);
  case TypeKind::Struct:
    return name_ == other.name_;
  case TypeKind::Array:
    return count_ == other.count_ && inner_->equals(*other.inner_);
  }
  return false;
}

std::string Type::str() const {
  switch (kind_) {
  case TypeKind::Void:
    return "void";
  case TypeKind::Bounds:
    return "bounds";
  case TypeKind::Int:
    return "i" + std::to_string(bits_);
  case TypeKind::Ptr:
    return inner_->str() + "*";
  case TypeKind::Struct:
    return name_;
  case TypeKind::Array:
    return "[" + std::to_string(count_) + " x " + inner_->str() + "]";
  }
  return "?";
}

} // namespace sbound
