#include "sbound/parser.hpp"

#include <cctype>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace sbound {

ValidationError::ValidationError(std::vector<std::string> vs)
    : std::runtime_error(vs.empty() ? "validation failed"
                                    : "validation failed: " + vs.front() +
                                          (vs.size() > 1 ? " (+" +
                                               std::to_string(vs.size() - 1) +
                                               " more)"
                                                         : "")),
      violations(std::move(vs)) {}

namespace {

bool isIdentStart(char c) { return std::isalpha(uint8_t(c)) || c == '_'; }
bool isIdentChar(char c) {
  return std::isalnum(uint8_t(c)) || c == '_' || c == '.';
}

struct Token {
  enum class Kind {
    Ident,   // foo, sb.check, i32
    Local,   // %name
    Sym,     // @name
    Int,     // 123, -5, 0x10
    Punct,   // single char
    End,
  } kind = Kind::End;
  std::string text;
  int64_t intValue = 0;
  int col = 0;
};

class LineLexer {
public:
  LineLexer(const std::string &line, int lineNo) : line_(line), lineNo_(lineNo) {
    next();
  }

  const Token &peek() const { return tok_; }
  bool atEnd() const { return tok_.kind == Token::Kind::End; }

  Token take() {
    Token t = tok_;
    next();
    return t;
  }

  [[noreturn]] void fail(const std::string &msg) const {
    throw ParseError(lineNo_, tok_.col + 1, msg);
  }

  std::string expectIdent(const char *what) {
    if (tok_.kind != Token::Kind::Ident)
      fail(std::string("expected ") + what);
    return take().text;
  }

  std::string expectLocal() {
    if (tok_.kind != Token::Kind::Local)
      fail("expected %value");
    return take().text;
  }

  int64_t expectInt() {
    if (tok_.kind != Token::Kind::Int)
      fail("expected integer");
    return take().intValue;
  }

  void expectPunct(char c) {
    if (tok_.kind != Token::Kind::Punct || tok_.text[0] != c)
      fail(std::string("expected '") + c + "'");
    next();
  }

  bool tryPunct(char c) {
    if (tok_.kind == Token::Kind::Punct && tok_.text[0] == c) {
      next();
      return true;
    }
    return false;
  }

  bool tryKeyword(const char *kw) {
    if (tok_.kind == Token::Kind::Ident && tok_.text == kw) {
      next();
      return true;
    }
    return false;
  }

  void expectEnd() {
    if (!atEnd())
      fail("trailing tokens");
  }

  int lineNo() const { return lineNo_; }

private:
  void next() {
    while (pos_ < line_.size() && std::isspace(uint8_t(line_[pos_])))
      ++pos_;
    tok_.col = int(pos_);
    if (pos_ >= line_.size() || line_[pos_] == ';') {
      tok_.kind = Token::Kind::End;
      tok_.text.clear();
      return;
    }
    char c = line_[pos_];
    if (c == '%' || c == '@') {
      size_t start = ++pos_;
      while (pos_ < line_.size() && isIdentChar(line_[pos_]))
        ++pos_;
      if (pos_ == start)
        throw ParseError(lineNo_, int(start), "empty name");
      tok_.kind = c == '%' ? Token::Kind::Local : Token::Kind::Sym;
      tok_.text = line_.substr(start, pos_ - start);
      return;
    }
    if (std::isdigit(uint8_t(c)) ||
        (c == '-' && pos_ + 1 < line_.size() &&
         std::isdigit(uint8_t(line_[pos_ + 1])))) {
      size_t start = pos_;
      if (c == '-')
        ++pos_;
      int base = 10;
      if (pos_ + 1 < line_.size() && line_[pos_] == '0' &&
          (line_[pos_ + 1] == 'x' || line_[pos_ + 1] == 'X')) {
        base = 16;
        pos_ += 2;
      }
      while (pos_ < line_.size() &&
             (std::isalnum(uint8_t(line_[pos_]))))
        ++pos_;
      tok_.kind = Token::Kind::Int;
      tok_.text = line_.substr(start, pos_ - start);
      errno = 0;
      char *end = nullptr;
      std::string digits = tok_.text;
      if (base == 16)
        digits = (c == '-' ? "-" : "") + digits.substr(c == '-' ? 3 : 2);
      tok_.intValue = int64_t(std::strtoull(
          digits.c_str() + (digits[0] == '-' ? 1 : 0), &end, base));
      if (digits[0] == '-')
        tok_.intValue = -tok_.intValue;
      if (end == nullptr || *end != '\0')
        throw ParseError(lineNo_, int(start) + 1, "bad integer literal");
      return;
    }
    if (isIdentStart(c)) {
      size_t start = pos_;
      while (pos_ < line_.size() && isIdentChar(line_[pos_]))
        ++pos_;
      tok_.kind = Token::Kind::Ident;
      tok_.text = line_.substr(start, pos_ - start);
      return;
    }
    tok_.kind = Token::Kind::Punct;
    tok_.text = std::string(1, c);
    ++pos_;
  }

  const std::string &line_;
  size_t pos_ = 0;
  int lineNo_;
  Token tok_;
};

struct RawLine {
  std::string text;
  int number;
};

class Parser {
public:
  explicit Parser(const std::string &text) { splitLines(text); }

  Program run() {
    parseMeta();
    collectTopLevel();
    parseStructBodies();
    layoutStructs();
    parseGlobals();
    collectSignatures();
    for (auto &fn : rawFunctions_)
      parseFunctionBody(fn);
    return std::move(program_);
  }

private:
  struct RawFunction {
    RawLine header;
    std::vector<RawLine> body;
    uint32_t index = 0;
  };

  void splitLines(const std::string &text) {
    std::string cur;
    int number = 1;
    for (char c : text) {
      if (c == '\n') {
        lines_.push_back({cur, number++});
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty())
      lines_.push_back({cur, number});
  }

  static bool blankOrComment(const std::string &s) {
    for (char c : s) {
      if (c == ';')
        return true;
      if (!std::isspace(uint8_t(c)))
        return false;
    }
    return true;
  }

  void parseMeta() {
    for (const auto &ln : lines_) {
      std::string_view sv(ln.text);
      size_t p = sv.find_first_not_of(" \t");
      if (p == std::string_view::npos)
        continue;
      if (sv.substr(p, 2) != ";!") {
        if (sv[p] == ';')
          continue;
        break; // meta headers appear before any content
      }
      std::string rest(sv.substr(p + 2));
      auto colon = rest.find(':');
      if (colon == std::string::npos)
        throw ParseError(ln.number, int(p) + 1, "bad ;! header");
      std::string key = rest.substr(0, colon);
      std::istringstream vals(rest.substr(colon + 1));
      if (key == "expect") {
        vals >> program_.meta.expect;
        static const std::set<std::string> ok = {"ok", "OD", "BR", "TF",
                                                 "fault"};
        if (!ok.count(program_.meta.expect))
          throw ParseError(ln.number, 1,
                           "expect must be one of ok|OD|BR|TF|fault");
      } else if (key == "input") {
        std::vector<int64_t> v;
        int64_t x;
        while (vals >> x)
          v.push_back(x);
        program_.meta.inputs.push_back(std::move(v));
      } else if (key == "tags") {
        std::string t;
        while (vals >> t)
          program_.meta.tags.push_back(t);
      } else {
        throw ParseError(ln.number, 1, "unknown ;! header: " + key);
      }
    }
  }

  void collectTopLevel() {
    size_t i = 0;
    while (i < lines_.size()) {
      const RawLine &ln = lines_[i];
      if (blankOrComment(ln.text)) {
        ++i;
        continue;
      }
      LineLexer lex(ln.text, ln.number);
      if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "struct") {
        rawStructs_.push_back(ln);
        registerStructName(ln);
        ++i;
      } else if (lex.peek().kind == Token::Kind::Ident &&
                 lex.peek().text == "global") {
        rawGlobals_.push_back(ln);
        ++i;
      } else if (lex.peek().kind == Token::Kind::Ident &&
                 lex.peek().text == "fn") {
        RawFunction fn;
        fn.header = ln;
        ++i;
        int depth = countBraces(ln.text);
        while (i < lines_.size() && depth > 0) {
          depth += countBraces(lines_[i].text);
          if (depth > 0)
            fn.body.push_back(lines_[i]);
          ++i;
        }
        if (depth != 0)
          throw ParseError(ln.number, 1, "unterminated function body");
        rawFunctions_.push_back(std::move(fn));
      } else {
        LineLexer l2(ln.text, ln.number);
        l2.fail("expected struct, global, or fn");
      }
    }
  }

  static int countBraces(const std::string &s) {
    int d = 0;
    for (char c : s) {
      if (c == ';')
        break;
      if (c == '{')
        ++d;
      if (c == '}')
        --d;
    }
    return d;
  }

  void registerStructName(const RawLine &ln) {
    LineLexer lex(ln.text, ln.number);
    lex.tryKeyword("struct");
    std::string name = lex.expectIdent("struct name");
    if (structIndex_.count(name))
      lex.fail("duplicate struct " + name);
    structIndex_[name] = uint32_t(program_.structs.size());
    StructDef def;
    def.name = name;
    program_.structs.push_back(std::move(def));
  }

  TypeRef parseType(LineLexer &lex) {
    TypeRef base;
    if (lex.tryPunct('[')) {
      int64_t n = lex.expectInt();
      if (n < 0)
        lex.fail("negative array length");
      std::string x = lex.expectIdent("x");
      if (x != "x")
        lex.fail("expected 'x' in array type");
      TypeRef elem = parseType(lex);
      lex.expectPunct(']');
      base = Type::arrayTy(elem, uint64_t(n));
    } else {
      std::string name = lex.expectIdent("type");
      if (name == "void")
        base = Type::voidTy();
      else if (name == "i1")
        base = Type::intTy(1);
      else if (name == "i8")
        base = Type::intTy(8);
      else if (name == "i16")
        base = Type::intTy(16);
      else if (name == "i32")
        base = Type::intTy(32);
      else if (name == "i64")
        base = Type::intTy(64);
      else if (structIndex_.count(name))
        base = Type::structTy(name);
      else
        lex.fail("unknown type " + name);
    }
    while (lex.tryPunct('*'))
      base = Type::ptrTo(base);
    return base;
  }

  void parseStructBodies() {
    for (const auto &ln : rawStructs_) {
      LineLexer lex(ln.text, ln.number);
      lex.tryKeyword("struct");
      std::string name = lex.expectIdent("struct name");
      StructDef &def = program_.structs[structIndex_.at(name)];
      lex.expectPunct('{');
      if (!lex.tryPunct('}')) {
        do {
          StructField field;
          field.name = lex.expectIdent("field name");
          lex.expectPunct(':');
          field.type = parseType(lex);
          if (field.type->isVoid() || field.type->isBounds())
            lex.fail("field " + field.name + " has non-storable type");
          def.fields.push_back(std::move(field));
        } while (lex.tryPunct(','));
        lex.expectPunct('}');
      }
      lex.expectEnd();
    }
  }

  void layoutStructs() {
    // Dependency order with cycle detection; pointers do not recurse.
    enum class Mark : uint8_t { White, Grey, Black };
    std::vector<Mark> marks(program_.structs.size(), Mark::White);
    std::vector<uint32_t> order;

    auto deps = [&](const StructDef &def, auto &&visit) {
      for (const auto &f : def.fields) {
        const Type *t = f.type.get();
        while (t->isArray())
          t = t->elem().get();
        if (t->isStruct())
          visit(structIndex_.at(t->structName()));
      }
    };

    std::vector<uint32_t> stack;
    auto dfs = [&](auto &&self, uint32_t idx) -> void {
      if (marks[idx] == Mark::Black)
        return;
      if (marks[idx] == Mark::Grey)
        throw ParseError(1, 1, "struct cycle involving " +
                                   program_.structs[idx].name);
      marks[idx] = Mark::Grey;
      deps(program_.structs[idx],
           [&](uint32_t dep) { self(self, dep); });
      marks[idx] = Mark::Black;
      order.push_back(idx);
    };
    for (uint32_t i = 0; i < program_.structs.size(); ++i)
      dfs(dfs, i);
    for (uint32_t idx : order)
      layoutStruct(program_.structs[idx], program_);
  }

  void parseGlobals() {
    for (const auto &ln : rawGlobals_) {
      LineLexer lex(ln.text, ln.number);
      lex.tryKeyword("global");
      GlobalDef g;
      g.name = lex.expectIdent("global name");
      if (program_.findGlobal(g.name))
        lex.fail("duplicate global " + g.name);
      lex.expectPunct(':');
      lex.expectPunct('[');
      int64_t n = lex.expectInt();
      if (n < 0)
        lex.fail("negative array length");
      g.count = uint64_t(n);
      std::string x = lex.expectIdent("x");
      if (x != "x")
        lex.fail("expected 'x' in array type");
      g.elem = parseType(lex);
      lex.expectPunct(']');
      lex.expectEnd();
      if (g.elem->isVoid() || g.elem->isBounds())
        lex.fail("global element has non-storable type");
      program_.globals.push_back(std::move(g));
    }
  }

  void collectSignatures() {
    for (auto &fn : rawFunctions_) {
      LineLexer lex(fn.header.text, fn.header.number);
      lex.tryKeyword("fn");
      Function f;
      f.name = lex.expectIdent("function name");
      IntrinsicKind ik;
      if (lookupIntrinsic(f.name, ik))
        lex.fail("reserved function name " + f.name);
      if (program_.findFunction(f.name))
        lex.fail("duplicate function " + f.name);
      lex.expectPunct('(');
      if (!lex.tryPunct(')')) {
        do {
          Param p;
          p.name = lex.expectLocal();
          lex.expectPunct(':');
          p.type = parseType(lex);
          f.params.push_back(std::move(p));
        } while (lex.tryPunct(','));
        lex.expectPunct(')');
      }
      if (lex.tryPunct('-')) {
        lex.expectPunct('>');
        f.retType = parseType(lex);
      } else {
        f.retType = Type::voidTy();
      }
      lex.expectPunct('{');
      lex.expectEnd();
      fn.index = uint32_t(program_.functions.size());
      program_.functions.push_back(std::move(f));
    }
  }

  struct FnCtx {
    Function *f = nullptr;
    std::map<std::string, ValueId> valueIds;
    int line = 0;
  };

  ValueId defineValue(FnCtx &ctx, const std::string &name, TypeRef type,
                      ValueDef def, int line) {
    if (ctx.valueIds.count(name))
      throw ParseError(line, 1, "redefinition of %" + name);
    ValueId id = ctx.f->numValues();
    ctx.valueIds[name] = id;
    ctx.f->valueNames.push_back(name);
    ctx.f->valueTypes.push_back(std::move(type));
    ctx.f->valueDefs.push_back(def);
    return id;
  }

  void parseFunctionBody(RawFunction &raw) {
    Function &f = program_.functions[raw.index];
    FnCtx ctx;
    ctx.f = &f;
    for (uint32_t i = 0; i < f.params.size(); ++i) {
      ValueDef d;
      d.kind = ValueDef::Kind::Param;
      d.paramIndex = i;
      defineValue(ctx, f.params[i].name, f.params[i].type, d,
                  raw.header.number);
    }

    // Pass 1: blocks, labels, and placeholder ids for every result so phis
    // can reference values defined later (back edges).
    struct PendingInstr {
      RawLine line;
      uint32_t block;
      uint32_t index;
    };
    std::vector<PendingInstr> pending;
    uint32_t curBlock = kNoBlock;
    for (const auto &ln : raw.body) {
      if (blankOrComment(ln.text))
        continue;
      if (isLabelLine(ln.text)) {
        LineLexer lex(ln.text, ln.number);
        std::string label = lex.expectIdent("label");
        lex.expectPunct(':');
        lex.expectEnd();
        if (f.blockIndex(label) != kNoBlock)
          throw ParseError(ln.number, 1, "duplicate label " + label);
        f.blocks.push_back(Block{label, {}});
        curBlock = uint32_t(f.blocks.size() - 1);
        continue;
      }
      if (curBlock == kNoBlock)
        throw ParseError(ln.number, 1, "instruction before first label");
      pending.push_back({ln, curBlock, uint32_t(f.blocks[curBlock].instrs.size())});
      f.blocks[curBlock].instrs.emplace_back(); // placeholder
    }

    // Pre-register result names with placeholder types.
    for (const auto &pi : pending) {
      std::string head = resultName(pi.line.text);
      if (!head.empty()) {
        ValueDef d;
        d.kind = ValueDef::Kind::Instr;
        d.at = {pi.block, pi.index};
        defineValue(ctx, head, nullptr, d, pi.line.number);
      }
    }

    // Pass 2: full parse.
    for (const auto &pi : pending) {
      Instr in = parseInstr(ctx, pi.line);
      f.blocks[pi.block].instrs[pi.index] = std::move(in);
    }

    // Resolve branch/phi labels to block indices.
    for (auto &bb : f.blocks) {
      for (auto &in : bb.instrs) {
        in.targets.clear();
        for (const auto &label : in.labels) {
          uint32_t idx = f.blockIndex(label);
          if (idx == kNoBlock)
            throw ParseError(raw.header.number, 1,
                             "unknown label " + label + " in " + f.name);
          in.targets.push_back(idx);
        }
      }
    }
  }

  static bool isLabelLine(const std::string &s) {
    // "<ident>:" and nothing else
    size_t i = 0;
    while (i < s.size() && std::isspace(uint8_t(s[i])))
      ++i;
    if (i >= s.size() || !isIdentStart(s[i]))
      return false;
    while (i < s.size() && isIdentChar(s[i]))
      ++i;
    if (i >= s.size() || s[i] != ':')
      return false;
    ++i;
    while (i < s.size() && std::isspace(uint8_t(s[i])))
      ++i;
    return i >= s.size() || s[i] == ';';
  }

  static std::string resultName(const std::string &s) {
    size_t i = 0;
    while (i < s.size() && std::isspace(uint8_t(s[i])))
      ++i;
    // sb.extract %b = bounds %p defines %b
    if (s.compare(i, 10, "sb.extract") == 0) {
      i += 10;
      while (i < s.size() && std::isspace(uint8_t(s[i])))
        ++i;
    }
    if (i >= s.size() || s[i] != '%')
      return "";
    size_t start = ++i;
    while (i < s.size() && isIdentChar(s[i]))
      ++i;
    size_t nameEnd = i;
    while (i < s.size() && std::isspace(uint8_t(s[i])))
      ++i;
    if (i < s.size() && s[i] == '=')
      return s.substr(start, nameEnd - start);
    return "";
  }

  Operand parseOperand(FnCtx &ctx, LineLexer &lex) {
    const Token &t = lex.peek();
    if (t.kind == Token::Kind::Local) {
      Token tok = lex.take();
      auto it = ctx.valueIds.find(tok.text);
      if (it == ctx.valueIds.end())
        throw ParseError(lex.lineNo(), tok.col + 1,
                         "unknown value %" + tok.text);
      return Operand::val(it->second);
    }
    if (t.kind == Token::Kind::Int)
      return Operand::immediate(lex.take().intValue);
    if (t.kind == Token::Kind::Sym) {
      Token tok = lex.take();
      if (program_.findGlobal(tok.text))
        return Operand::global(tok.text);
      return Operand::func(tok.text); // existence checked by validate
    }
    lex.fail("expected operand");
  }

  TypeRef operandType(const FnCtx &ctx, const Operand &op) const {
    switch (op.kind) {
    case Operand::Kind::Value:
      return ctx.f->valueTypes[op.value];
    case Operand::Kind::Imm:
      return Type::intTy(64);
    case Operand::Kind::Global: {
      const GlobalDef *g = program_.findGlobal(op.sym);
      return Type::ptrTo(g->elem); // arrays decay to element pointers
    }
    case Operand::Kind::Func:
      return Type::ptrTo(Type::intTy(8));
    }
    return nullptr;
  }

  void setResultType(FnCtx &ctx, ValueId id, TypeRef type) {
    ctx.f->valueTypes[id] = std::move(type);
  }

  Instr parseInstr(FnCtx &ctx, const RawLine &ln) {
    LineLexer lex(ln.text, ln.number);
    Instr in;

    if (lex.tryKeyword("sb.extract")) {
      std::string b = lex.expectLocal();
      lex.expectPunct('=');
      if (!lex.tryKeyword("bounds"))
        lex.fail("expected 'bounds'");
      in.op = Opcode::SbExtract;
      in.result = ctx.valueIds.at(b);
      in.args.push_back(parseOperand(ctx, lex));
      setResultType(ctx, in.result, Type::boundsTy());
      lex.expectEnd();
      return in;
    }
    if (lex.tryKeyword("sb.check")) {
      in.op = Opcode::SbCheck;
      in.args.push_back(parseOperand(ctx, lex));
      lex.expectPunct(',');
      in.args.push_back(parseOperand(ctx, lex));
      if (lex.tryPunct('+'))
        in.checkConst = lex.expectInt();
      lex.expectPunct(',');
      std::string halves = lex.expectIdent("halves (uo|u|o)");
      if (halves == "uo")
        in.checkHalves = kCheckBoth;
      else if (halves == "u")
        in.checkHalves = kCheckUnderflow;
      else if (halves == "o")
        in.checkHalves = kCheckOverflow;
      else
        lex.fail("halves must be uo|u|o");
      lex.expectEnd();
      return in;
    }

    ValueId result = kNoValue;
    if (lex.peek().kind == Token::Kind::Local) {
      std::string name = lex.take().text;
      lex.expectPunct('=');
      result = ctx.valueIds.at(name);
    }
    in.result = result;

    std::string op = lex.expectIdent("opcode");
    auto needResult = [&](TypeRef type) {
      if (result == kNoValue)
        lex.fail(op + " requires a result");
      setResultType(ctx, result, std::move(type));
    };
    auto noResult = [&] {
      if (result != kNoValue)
        lex.fail(op + " produces no result");
    };

    if (op == "alloc") {
      in.op = Opcode::HeapAlloc;
      in.args.push_back(parseOperand(ctx, lex));
      needResult(Type::ptrTo(Type::intTy(8)));
    } else if (op == "free") {
      in.op = Opcode::HeapFree;
      in.args.push_back(parseOperand(ctx, lex));
      noResult();
    } else if (op == "stackalloc") {
      in.op = Opcode::StackAlloc;
      in.type = parseType(lex);
      needResult(Type::ptrTo(in.type->isArray() ? in.type->elem() : in.type));
    } else if (op == "gep") {
      in.op = Opcode::Gep;
      in.args.push_back(parseOperand(ctx, lex));
      lex.expectPunct(',');
      in.type = parseType(lex);
      lex.expectPunct(',');
      in.args.push_back(parseOperand(ctx, lex));
      needResult(Type::ptrTo(in.type));
    } else if (op == "fieldgep") {
      in.op = Opcode::FieldGep;
      in.args.push_back(parseOperand(ctx, lex));
      lex.expectPunct(',');
      std::string sname = lex.expectIdent("struct name");
      if (!structIndex_.count(sname))
        lex.fail("unknown struct " + sname);
      in.type = Type::structTy(sname);
      lex.expectPunct(',');
      int64_t k = lex.expectInt();
      const StructDef &def = program_.structs[structIndex_.at(sname)];
      if (k < 0 || uint64_t(k) >= def.fields.size())
        lex.fail("field index out of range for " + sname);
      in.fieldIndex = uint32_t(k);
      TypeRef ft = def.fields[size_t(k)].type;
      needResult(Type::ptrTo(ft->isArray() ? ft->elem() : ft));
    } else if (op == "cast") {
      in.op = Opcode::Cast;
      in.args.push_back(parseOperand(ctx, lex));
      if (!lex.tryKeyword("to"))
        lex.fail("expected 'to'");
      in.type = parseType(lex);
      if (!in.type->isPtr())
        lex.fail("cast target must be a pointer type");
      needResult(in.type);
    } else if (op == "load") {
      in.op = Opcode::Load;
      in.type = parseType(lex);
      in.args.push_back(parseOperand(ctx, lex));
      needResult(in.type);
    } else if (op == "store") {
      in.op = Opcode::Store;
      in.type = parseType(lex);
      in.args.push_back(parseOperand(ctx, lex)); // value
      lex.expectPunct(',');
      in.args.push_back(parseOperand(ctx, lex)); // address
      noResult();
    } else if (op == "call") {
      const Token &t = lex.peek();
      if (t.kind == Token::Kind::Local) {
        in.args.push_back(parseOperand(ctx, lex)); // indirect callee first
        in.op = Opcode::Call;
      } else {
        std::string callee = lex.expectIdent("callee");
        IntrinsicKind ik;
        if (lookupIntrinsic(callee, ik)) {
          in.op = Opcode::Intrinsic;
          in.intrinsic = ik;
        } else {
          in.op = Opcode::Call;
          in.callee = callee;
        }
      }
      lex.expectPunct('(');
      if (!lex.tryPunct(')')) {
        do {
          in.args.push_back(parseOperand(ctx, lex));
        } while (lex.tryPunct(','));
        lex.expectPunct(')');
      }
      if (result != kNoValue) {
        TypeRef rt;
        if (in.op == Opcode::Intrinsic) {
          if (in.intrinsic != IntrinsicKind::Input)
            lex.fail("intrinsic produces no result");
          rt = Type::intTy(64);
        } else if (!in.callee.empty()) {
          const Function *callee = program_.findFunction(in.callee);
          if (!callee)
            lex.fail("unknown function " + in.callee);
          if (callee->retType->isVoid())
            lex.fail(in.callee + " returns void");
          rt = callee->retType;
        } else {
          rt = Type::intTy(64); // indirect call result is a raw word
        }
        setResultType(ctx, result, rt);
      }
    } else if (op == "br") {
      in.op = Opcode::Br;
      in.labels.push_back(lex.expectIdent("label"));
      noResult();
    } else if (op == "brif") {
      in.op = Opcode::BrIf;
      in.args.push_back(parseOperand(ctx, lex));
      lex.expectPunct(',');
      in.labels.push_back(lex.expectIdent("label"));
      lex.expectPunct(',');
      in.labels.push_back(lex.expectIdent("label"));
      noResult();
    } else if (op == "phi") {
      in.op = Opcode::Phi;
      in.type = parseType(lex);
      do {
        lex.expectPunct('[');
        in.args.push_back(parseOperand(ctx, lex));
        lex.expectPunct(',');
        in.labels.push_back(lex.expectIdent("label"));
        lex.expectPunct(']');
      } while (lex.tryPunct(','));
      needResult(in.type);
    } else if (op == "ret") {
      in.op = Opcode::Ret;
      if (!lex.atEnd())
        in.args.push_back(parseOperand(ctx, lex));
      noResult();
    } else if (op == "ptrtoint") {
      in.op = Opcode::PtrToInt;
      in.args.push_back(parseOperand(ctx, lex));
      needResult(Type::intTy(64));
    } else if (op == "inttoptr") {
      in.op = Opcode::IntToPtr;
      in.args.push_back(parseOperand(ctx, lex));
      if (!lex.tryKeyword("to"))
        lex.fail("expected 'to'");
      in.type = parseType(lex);
      if (!in.type->isPtr())
        lex.fail("inttoptr target must be a pointer type");
      needResult(in.type);
    } else {
      // integer arithmetic / comparison
      static const std::map<std::string, ArithOp> arithOps = {
          {"add", ArithOp::Add},   {"sub", ArithOp::Sub},
          {"mul", ArithOp::Mul},   {"udiv", ArithOp::UDiv},
          {"sdiv", ArithOp::SDiv}, {"urem", ArithOp::URem},
          {"srem", ArithOp::SRem}, {"shl", ArithOp::Shl},
          {"lshr", ArithOp::LShr}, {"ashr", ArithOp::AShr},
          {"and", ArithOp::And},   {"or", ArithOp::Or},
          {"xor", ArithOp::Xor},   {"eq", ArithOp::Eq},
          {"ne", ArithOp::Ne},     {"slt", ArithOp::Slt},
          {"sle", ArithOp::Sle},   {"sgt", ArithOp::Sgt},
          {"sge", ArithOp::Sge},   {"ult", ArithOp::Ult},
          {"ule", ArithOp::Ule},   {"ugt", ArithOp::Ugt},
          {"uge", ArithOp::Uge}};
      auto it = arithOps.find(op);
      if (it == arithOps.end())
        lex.fail("unknown opcode " + op);
      in.op = Opcode::IntArith;
      in.arith = it->second;
      in.type = parseType(lex);
      in.args.push_back(parseOperand(ctx, lex));
      lex.expectPunct(',');
      in.args.push_back(parseOperand(ctx, lex));
      needResult(isComparison(in.arith) ? Type::intTy(1) : in.type);
    }
    lex.expectEnd();
    return in;
  }

  std::vector<RawLine> lines_;
  std::vector<RawLine> rawStructs_;
  std::vector<RawLine> rawGlobals_;
  std::vector<RawFunction> rawFunctions_;
  std::map<std::string, uint32_t> structIndex_;
  Program program_;
};

} // namespace

Program parseProgram(const std::string &text) {
  Parser parser(text);
  Program p = parser.run();
  auto violations = validate(p);
  if (!violations.empty())
    throw ValidationError(std::move(violations));
  return p;
}

} // namespace sbound
