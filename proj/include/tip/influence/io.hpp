// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_INFLUENCE_IO_HPP
#define TIP_INFLUENCE_IO_HPP

#include <string>
#include <vector>

#include "tip/influence/influence.hpp"
#include "tip/influence/model.hpp"

namespace tip::influence {

/// CSV with a header row; feature columns first, label column last.
Dataset load_csv(const std::string& path);
void save_csv(const std::string& path, const Dataset& data);

/// Model checkpoint, magic "TIPM", little-endian.
std::vector<std::uint8_t> serialize_model(const Model& m);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

/// Projection checkpoint, magic "TIPP", little-endian.
std::vector<std::uint8_t> serialize_projection(const ProjectionOperator& p);
ProjectionOperator deserialize_projection(const std::vector<std::uint8_t>& b);
void save_projection(const std::string& path, const ProjectionOperator& p);
ProjectionOperator load_projection(const std::string& path);

}  // namespace tip::influence

#endif  // TIP_INFLUENCE_IO_HPP
