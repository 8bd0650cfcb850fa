#pragma once
#include <string>
#include <string_view>

namespace bpm {

// Lowercase hex SHA-1 digest of the bytes.
std::string sha1_hex(std::string_view data);

// Content hash in git's object format: sha1("blob <size>\0" + content),
// matching what `git hash-object` prints for the same bytes.
std::string git_blob_hash(std::string_view content);

}  // namespace bpm
