// SPDX-License-Identifier: Apache-2.0

#include "tip/influence/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tip/common/binio.hpp"
#include "tip/common/error.hpp"

namespace tip::influence {

namespace {

constexpr char kModelMagic[4] = {'T', 'I', 'P', 'M'};
constexpr char kProjMagic[4] = {'T', 'I', 'P', 'P'};
constexpr std::uint16_t kCheckpointVersion = 1;

void write_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

Eigen::MatrixXd read_matrix(ByteReader& r) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols > (1u << 26))
        fail(ErrorCode::MalformedFrame, "matrix unreasonably large");
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f64();
    return m;
}

void write_vector(ByteWriter& w, const Eigen::VectorXd& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

Eigen::VectorXd read_vector(ByteReader& r) {
    const std::uint32_t n = r.u32();
    if (n > (1u << 26)) fail(ErrorCode::MalformedFrame, "vector too large");
    Eigen::VectorXd v(n);
    for (std::uint32_t i = 0; i < n; ++i) v[i] = r.f64();
    return v;
}

void check_version(ByteReader& r) {
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion)
        fail(ErrorCode::VersionMismatch,
             "unsupported checkpoint version " + std::to_string(version));
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        fail(ErrorCode::IoError, "empty CSV " + path);
    Dataset data;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail(ErrorCode::IoError, "non-numeric CSV cell: " + cell);
            }
        }
        if (row.size() < 2)
            fail(ErrorCode::IoError, "CSV row needs features and a label");
        if (width == 0) width = row.size();
        if (row.size() != width)
            fail(ErrorCode::IoError, "inconsistent CSV row width");
        Example z;
        z.features = Eigen::Map<Eigen::VectorXd>(row.data(), row.size() - 1);
        z.label = row.back();
        data.push_back(std::move(z));
    }
    return data;
}

void save_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    if (data.empty()) fail(ErrorCode::InvalidParams, "empty dataset");
    for (Eigen::Index i = 0; i < data.front().features.size(); ++i)
        out << 'f' << i << ',';
    out << "label\n";
    char buf[32];
    for (const auto& z : data) {
        for (Eigen::Index i = 0; i < z.features.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", z.features[i]);
            out << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.17g", z.label);
        out << buf << '\n';
    }
}

std::vector<std::uint8_t> serialize_model(const Model& m) {
    ByteWriter w;
    w.magic(kModelMagic);
    w.u16(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(m.activation));
    w.u8(static_cast<std::uint8_t>(m.head));
    w.f64(m.l2);
    w.u8(m.theta_hat_flag ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(m.layers.size()));
    for (const auto& l : m.layers) {
        write_matrix(w, l.W);
        write_vector(w, l.b);
    }
    return w.take();
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    r.expect_magic(kModelMagic);
    check_version(r);
    Model m;
    m.activation = static_cast<Activation>(r.u8());
    m.head = static_cast<Head>(r.u8());
    m.l2 = r.f64();
    m.theta_hat_flag = r.u8() != 0;
    const std::uint8_t layers = r.u8();
    for (std::uint8_t i = 0; i < layers; ++i) {
        DenseLayer l;
        l.W = read_matrix(r);
        l.b = read_vector(r);
        m.layers.push_back(std::move(l));
    }
    if (!r.done()) fail(ErrorCode::MalformedFrame, "trailing bytes");
    m.validate();
    return m;
}

void save_model(const std::string& path, const Model& m) {
    write_file(path, serialize_model(m));
}

Model load_model(const std::string& path) {
    return deserialize_model(read_file(path));
}

std::vector<std::uint8_t> serialize_projection(const ProjectionOperator& p) {
    ByteWriter w;
    w.magic(kProjMagic);
    w.u16(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(p.layers.size()));
    for (const auto& l : p.layers) {
        write_matrix(w, l.P_in);
        write_matrix(w, l.P_out);
        write_vector(w, l.eig_in);
        write_vector(w, l.eig_out);
    }
    return w.take();
}

ProjectionOperator deserialize_projection(const std::vector<std::uint8_t>& b) {
    ByteReader r(b);
    r.expect_magic(kProjMagic);
    check_version(r);
    ProjectionOperator p;
    const std::uint8_t layers = r.u8();
    for (std::uint8_t i = 0; i < layers; ++i) {
        ProjectionOperator::LayerProj l;
        l.P_in = read_matrix(r);
        l.P_out = read_matrix(r);
        l.eig_in = read_vector(r);
        l.eig_out = read_vector(r);
        if (l.eig_in.size() != l.P_in.rows() ||
            l.eig_out.size() != l.P_out.rows())
            fail(ErrorCode::MalformedFrame, "projection eigenvalue mismatch");
        p.layers.push_back(std::move(l));
    }
    if (!r.done()) fail(ErrorCode::MalformedFrame, "trailing bytes");
    return p;
}

void save_projection(const std::string& path, const ProjectionOperator& p) {
    write_file(path, serialize_projection(p));
}

ProjectionOperator load_projection(const std::string& path) {
    return deserialize_projection(read_file(path));
}

}  // namespace tip::influence
