#pragma once

// Plain-text model file:
//
//   DTXMODEL v1
//   SEQ_LEN <n>
//   NORM
//   <field> <min> <max>          x14, record field order
//   LSTM <units> <inputs>
//   <tensor> <rows> <cols>       then <rows> lines of <cols> numbers, for each gate:
//                                wx.<gate>, wh.<gate>, b.<gate>
//   DENSE<k> <out> <in>          k = 0, 1, 2
//   w <out> <in> / rows...
//   b 1 <out> / row
//   END
//
// Numbers use 17 significant digits, so load(save(m)) == m exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cdasim/nn/model.hpp"
#include "cdasim/util/csv.hpp"
#include "cdasim/util/format.hpp"

namespace cdasim::nn {

inline constexpr const char* kModelMagic = "DTXMODEL v1";

/// A model file whose tensors have the wrong dimensions.
class ModelShapeError : public util::ParseError {
  public:
    using util::ParseError::ParseError;
};

namespace detail {

inline std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_matrix(std::ostream& out, const std::string& name, std::size_t rows, std::size_t cols,
                         const std::vector<double>& data) {
    out << name << ' ' << rows << ' ' << cols << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out << (c ? " " : "") << format17(data[r * cols + c]);
        out << '\n';
    }
}

class ModelReader {
  public:
    ModelReader(std::istream& in, std::string source) : reader_(in), source_(std::move(source)) {}

    std::vector<std::string> tokens() {
        std::string line;
        while (reader_.next(line)) {
            if (util::trim(line).empty()) continue;
            std::istringstream ss(line);
            std::vector<std::string> out;
            for (std::string tok; ss >> tok;) out.push_back(tok);
            return out;
        }
        fail("unexpected end of file");
    }

    std::vector<std::string> expect_header(const std::string& keyword, std::size_t arity) {
        auto t = tokens();
        if (t.empty() || t[0] != keyword) fail("expected '" + keyword + "'");
        if (t.size() != arity + 1) fail("'" + keyword + "' takes " + std::to_string(arity) + " value(s)");
        return t;
    }

    std::size_t to_size(const std::string& s) {
        std::size_t v = 0;
        if (!util::parse_int(s, v)) fail("bad integer '" + s + "'");
        return v;
    }

    double to_double(const std::string& s) {
        double v = 0.0;
        if (!util::parse_double(s, v)) fail("bad number '" + s + "'");
        return v;
    }

    void read_matrix(const std::string& name, std::size_t rows, std::size_t cols, std::vector<double>& data) {
        auto h = expect_header(name, 2);
        if (to_size(h[1]) != rows || to_size(h[2]) != cols)
            shape_fail(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " + h[1] +
                       "x" + h[2]);
        data.assign(rows * cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            auto row = tokens();
            if (row.size() != cols) fail(name + ": row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                                         " values, expected " + std::to_string(cols));
            for (std::size_t c = 0; c < cols; ++c) data[r * cols + c] = to_double(row[c]);
        }
    }

    [[noreturn]] void fail(const std::string& what) { throw util::ParseError(source_, reader_.line_no(), what); }
    [[noreturn]] void shape_fail(const std::string& what) { throw ModelShapeError(source_, reader_.line_no(), what); }

  private:
    util::LineReader reader_;
    std::string source_;
};

}  // namespace detail

inline void save_model(const ModelParams& m, std::ostream& out) {
    check_shapes(m);
    out << kModelMagic << '\n';
    out << "SEQ_LEN " << m.seq_len << '\n';
    out << "NORM\n";
    for (std::size_t i = 0; i < kRecordFields; ++i)
        out << kRecordFieldNames[i] << ' ' << detail::format17(m.norm.min[i]) << ' ' << detail::format17(m.norm.max[i])
            << '\n';
    out << "LSTM " << kHidden << ' ' << kInputs << '\n';
    for (std::size_t g = 0; g < 4; ++g) {
        detail::write_matrix(out, std::string("wx.") + kGateNames[g], kHidden, kInputs, m.lstm.wx[g].data);
        detail::write_matrix(out, std::string("wh.") + kGateNames[g], kHidden, kHidden, m.lstm.wh[g].data);
        detail::write_matrix(out, std::string("b.") + kGateNames[g], 1, kHidden, m.lstm.bias[g]);
    }
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& d = m.dense[l];
        out << "DENSE" << l << ' ' << d.w.rows << ' ' << d.w.cols << '\n';
        detail::write_matrix(out, "w", d.w.rows, d.w.cols, d.w.data);
        detail::write_matrix(out, "b", 1, d.b.size(), d.b);
    }
    out << "END\n";
}

inline void save_model(const ModelParams& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    save_model(m, out);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Parses a model file. Throws util::ParseError (or ModelShapeError for wrong tensor
/// dimensions) naming the offending line.
inline ModelParams load_model(std::istream& in, const std::string& source = "<stream>") {
    detail::ModelReader r(in, source);
    ModelParams m = zero_model();

    auto magic = r.tokens();
    if (magic.size() != 2 || magic[0] + " " + magic[1] != kModelMagic) r.fail("missing 'DTXMODEL v1' header");

    auto seq = r.expect_header("SEQ_LEN", 1);
    m.seq_len = static_cast<int>(r.to_size(seq[1]));
    if (m.seq_len < 1) r.fail("SEQ_LEN must be >= 1");

    r.expect_header("NORM", 0);
    for (std::size_t i = 0; i < kRecordFields; ++i) {
        auto t = r.tokens();
        if (t.size() != 3 || t[0] != kRecordFieldNames[i])
            r.fail("expected '" + std::string(kRecordFieldNames[i]) + " <min> <max>'");
        m.norm.min[i] = r.to_double(t[1]);
        m.norm.max[i] = r.to_double(t[2]);
        if (m.norm.min[i] > m.norm.max[i]) r.fail("NORM min exceeds max");
    }

    auto lstm = r.expect_header("LSTM", 2);
    if (r.to_size(lstm[1]) != kHidden || r.to_size(lstm[2]) != kInputs)
        r.shape_fail("LSTM shape " + lstm[1] + "x" + lstm[2] + ", expected 10x13");
    for (std::size_t g = 0; g < 4; ++g) {
        r.read_matrix(std::string("wx.") + kGateNames[g], kHidden, kInputs, m.lstm.wx[g].data);
        r.read_matrix(std::string("wh.") + kGateNames[g], kHidden, kHidden, m.lstm.wh[g].data);
        r.read_matrix(std::string("b.") + kGateNames[g], 1, kHidden, m.lstm.bias[g]);
    }
    for (std::size_t l = 0; l < 3; ++l) {
        auto h = r.expect_header("DENSE" + std::to_string(l), 2);
        const std::size_t out = kDenseChain[l + 1], in_ = kDenseChain[l];
        if (r.to_size(h[1]) != out || r.to_size(h[2]) != in_)
            r.shape_fail(h[0] + " shape " + h[1] + "x" + h[2] + ", expected " + std::to_string(out) + "x" +
                         std::to_string(in_));
        r.read_matrix("w", out, in_, m.dense[l].w.data);
        r.read_matrix("b", 1, out, m.dense[l].b);
    }
    r.expect_header("END", 0);
    return m;
}

inline ModelParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return load_model(in, path.string());
}

}  // namespace cdasim::nn
