import * as zlib from "node:zlib";

import { FormatError } from "./types.js";

export type NpyArray = {
	dtype: string;
	shape: number[];
	data: Float32Array | Float64Array | Int32Array | BigInt64Array | Uint8Array | Uint32Array;
};

const EOCD_SIG = 0x06054b50;
const CENTRAL_SIG = 0x02014b50;
const LOCAL_SIG = 0x04034b50;

/** Minimal zip reader covering what numpy's savez emits (stored or deflated). */
export function readZip(archive: Buffer): Map<string, Buffer> {
	let eocd = -1;
	for (let i = archive.length - 22; i >= 0; i--) {
		if (archive.readUInt32LE(i) === EOCD_SIG) {
			eocd = i;
			break;
		}
	}
	if (eocd < 0) throw new FormatError("not a zip archive (no end-of-central-directory)");
	const count = archive.readUInt16LE(eocd + 10);
	let off = archive.readUInt32LE(eocd + 16);
	const entries = new Map<string, Buffer>();
	for (let i = 0; i < count; i++) {
		if (archive.readUInt32LE(off) !== CENTRAL_SIG) {
			throw new FormatError("corrupt zip central directory");
		}
		const method = archive.readUInt16LE(off + 10);
		const compressed = archive.readUInt32LE(off + 20);
		const nameLen = archive.readUInt16LE(off + 28);
		const extraLen = archive.readUInt16LE(off + 30);
		const commentLen = archive.readUInt16LE(off + 32);
		const localOff = archive.readUInt32LE(off + 42);
		const name = archive.subarray(off + 46, off + 46 + nameLen).toString("utf8");
		if (archive.readUInt32LE(localOff) !== LOCAL_SIG) {
			throw new FormatError(`corrupt zip local header for ${name}`);
		}
		const lNameLen = archive.readUInt16LE(localOff + 26);
		const lExtraLen = archive.readUInt16LE(localOff + 28);
		const dataStart = localOff + 30 + lNameLen + lExtraLen;
		const raw = archive.subarray(dataStart, dataStart + compressed);
		if (method === 0) {
			entries.set(name, raw);
		} else if (method === 8) {
			entries.set(name, zlib.inflateRawSync(raw));
		} else {
			throw new FormatError(`unsupported zip compression method ${method}`);
		}
		off += 46 + nameLen + extraLen + commentLen;
	}
	return entries;
}

/** Parse a .npy buffer (format versions 1.x/2.x, little-endian dtypes). */
export function readNpy(buf: Buffer): NpyArray {
	if (buf.length < 10 || buf[0] !== 0x93 || buf.subarray(1, 6).toString("ascii") !== "NUMPY") {
		throw new FormatError("not an npy array");
	}
	const major = buf[6];
	let headerLen: number;
	let headerStart: number;
	if (major === 1) {
		headerLen = buf.readUInt16LE(8);
		headerStart = 10;
	} else {
		headerLen = buf.readUInt32LE(8);
		headerStart = 12;
	}
	const header = buf.subarray(headerStart, headerStart + headerLen).toString("ascii");
	const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
	const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1];
	const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1];
	if (!descr || !fortran || shapeText === undefined) {
		throw new FormatError(`unparseable npy header: ${header}`);
	}
	if (fortran === "True") throw new FormatError("fortran-ordered npy is not supported");
	const shape = shapeText.split(",").map((s) => s.trim()).filter(Boolean).map(Number);
	const data = buf.subarray(headerStart + headerLen);
	const copy = Buffer.from(data); // aligned copy so typed-array views are valid
	const ab = copy.buffer.slice(copy.byteOffset, copy.byteOffset + copy.byteLength);
	const count = shape.reduce((a, b) => a * b, 1);
	let array: NpyArray["data"];
	switch (descr) {
		case "<f4": array = new Float32Array(ab, 0, count); break;
		case "<f8": array = new Float64Array(ab, 0, count); break;
		case "<i4": array = new Int32Array(ab, 0, count); break;
		case "<u4": array = new Uint32Array(ab, 0, count); break;
		case "<i8": array = new BigInt64Array(ab, 0, count); break;
		case "|u1": case "|b1": array = new Uint8Array(ab, 0, count); break;
		default:
			throw new FormatError(`unsupported npy dtype ${descr}`);
	}
	return { dtype: descr, shape, data: array };
}

/** Load every array of an .npz file, keyed without the .npy suffix. */
export function readNpz(archive: Buffer): Map<string, NpyArray> {
	const out = new Map<string, NpyArray>();
	for (const [name, data] of readZip(archive)) {
		if (name.endsWith(".npy")) {
			out.set(name.slice(0, -4), readNpy(data));
		}
	}
	return out;
}
