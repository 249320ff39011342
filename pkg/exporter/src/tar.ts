import * as zlib from "node:zlib";

import { FormatError } from "./types.js";

/** Entries of a (possibly gzipped) tar archive, keyed by path. */
export function readTar(archive: Buffer): Map<string, Buffer> {
	let data = archive;
	if (data.length >= 2 && data[0] === 0x1f && data[1] === 0x8b) {
		data = zlib.gunzipSync(data);
	}
	const entries = new Map<string, Buffer>();
	let off = 0;
	while (off + 512 <= data.length) {
		const block = data.subarray(off, off + 512);
		if (block.every((b) => b === 0)) break; // end-of-archive marker
		const name = readString(block, 0, 100);
		const prefix = readString(block, 345, 155);
		const size = parseInt(readString(block, 124, 12) || "0", 8);
		if (Number.isNaN(size)) {
			throw new FormatError(`bad tar size field at offset ${off}`);
		}
		const type = block[156];
		off += 512;
		const path = prefix ? `${prefix}/${name}` : name;
		if (type === 0 || type === 0x30) {
			// regular file
			entries.set(path, data.subarray(off, off + size));
		}
		off += Math.ceil(size / 512) * 512;
	}
	return entries;
}

function readString(block: Buffer, start: number, len: number): string {
	const field = block.subarray(start, start + len);
	const end = field.indexOf(0);
	return field.subarray(0, end === -1 ? len : end).toString("utf8").trim();
}

/** Find an entry whose path ends with the suffix (archives nest a directory). */
export function tarEntry(entries: Map<string, Buffer>, suffix: string): Buffer {
	for (const [name, value] of entries) {
		if (name === suffix || name.endsWith(`/${suffix}`)) return value;
	}
	throw new FormatError(`archive is missing ${suffix}`);
}
