// Copyright 2026 The bodyscene Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BODYSCENE_COMMON_ALLOC_H_
#define BODYSCENE_COMMON_ALLOC_H_

namespace bodyscene {

// Training allocates and frees the same few large activation buffers every
// step. With glibc defaults those go through mmap/munmap and page-fault on
// every touch. Raises the mmap and trim thresholds so freed blocks stay in
// the heap. Process-wide; meant to be called once from main(). No-op off
// glibc.
void tune_allocator();

}  // namespace bodyscene

#endif  // BODYSCENE_COMMON_ALLOC_H_
