#include "dhh/errors.hpp"

namespace dhh {

ValidationError::ValidationError(std::string field, const std::string& what)
    : ConfigError(field + ": " + what), field_(std::move(field)) {}

}  // namespace dhh
