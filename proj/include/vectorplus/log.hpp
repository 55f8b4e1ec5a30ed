#pragma once

#include <string>

namespace vectorplus::log {

// Level comes from VECTORPLUS_LOG (error | info | debug); default error.
// Messages go to stderr.
void error(const std::string& message);
void info(const std::string& message);
void debug(const std::string& message);

}  // namespace vectorplus::log
