/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_boundary_points: (a: number) => [number, number];
export const demo_ci_grid: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_domain: () => [number, number];
export const demo_jitter: (a: number) => number;
export const demo_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const demo_similarity_grid: (a: number, b: number, c: number, d: number) => [number, number];
export const demo_train_points: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
