//===- printer.hpp - canonical textual form of a program -------------------===//
#pragma once

#include "sbound/ir.hpp"

#include <string>

namespace sbound {

std::string printProgram(const Program &p);
std::string printInstr(const Instr &in, const Function &f);

} // namespace sbound
