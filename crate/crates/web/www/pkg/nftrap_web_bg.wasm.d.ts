/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_webdemo_free: (a: number, b: number) => void;
export const webdemo_interleaved: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const webdemo_new: (a: number, b: number, c: bigint) => [number, number, number];
export const webdemo_probe: (a: number, b: number, c: number) => [number, number, number, number];
export const webdemo_spectrum: (a: number, b: number) => [number, number, number, number];
export const webdemo_states: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
