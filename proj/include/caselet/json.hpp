#pragma once

#include <json.hpp>

namespace caselet {

// Insertion-ordered JSON so every document we emit has a stable field order.
using Json = nlohmann::ordered_json;

}  // namespace caselet
