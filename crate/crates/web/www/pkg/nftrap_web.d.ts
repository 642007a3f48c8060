/* tslint:disable */
/* eslint-disable */

export class WebDemo {
    free(): void;
    [Symbol.dispose](): void;
    interleaved(pulses: number, probe_us: number, power: number, cool_ms: number): string;
    constructor(depth_uk: number, samples: number, seed: bigint);
    probe(power: number, duration_us: number): string;
    spectrum(points: number): string;
    states(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_webdemo_free: (a: number, b: number) => void;
    readonly webdemo_interleaved: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly webdemo_new: (a: number, b: number, c: bigint) => [number, number, number];
    readonly webdemo_probe: (a: number, b: number, c: number) => [number, number, number, number];
    readonly webdemo_spectrum: (a: number, b: number) => [number, number, number, number];
    readonly webdemo_states: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
