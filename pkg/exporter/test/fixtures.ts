import * as zlib from "node:zlib";

/** Minimal tar writer (ustar-ish, enough for the reader and real tools). */
export function buildTar(entries: Record<string, Buffer | string>): Buffer {
	const blocks: Buffer[] = [];
	for (const [name, raw] of Object.entries(entries)) {
		const data = Buffer.isBuffer(raw) ? raw : Buffer.from(raw, "utf8");
		const header = Buffer.alloc(512);
		header.write(name, 0, "utf8");
		header.write("0000644\0", 100, "ascii");
		header.write("0000000\0", 108, "ascii");
		header.write("0000000\0", 116, "ascii");
		header.write(data.length.toString(8).padStart(11, "0") + "\0", 124, "ascii");
		header.write("00000000000\0", 136, "ascii");
		header.write("        ", 148, "ascii"); // checksum spaces
		header.write("0", 156, "ascii");
		let sum = 0;
		for (const b of header) sum += b;
		header.write(sum.toString(8).padStart(6, "0") + "\0 ", 148, "ascii");
		blocks.push(header, data);
		const pad = (512 - (data.length % 512)) % 512;
		if (pad) blocks.push(Buffer.alloc(pad));
	}
	blocks.push(Buffer.alloc(1024));
	return Buffer.concat(blocks);
}

export function buildTgz(entries: Record<string, Buffer | string>): Buffer {
	return zlib.gzipSync(buildTar(entries));
}

/** npy v1 writer for little-endian dtypes. */
export function buildNpy(descr: string, shape: number[], values: ArrayLike<number | bigint>): Buffer {
	const shapeText = shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(", ")})`;
	let header = `{'descr': '${descr}', 'fortran_order': False, 'shape': ${shapeText}, }`;
	const unpadded = 10 + header.length + 1;
	header += " ".repeat((64 - (unpadded % 64)) % 64) + "\n";
	const head = Buffer.alloc(10 + header.length);
	head[0] = 0x93;
	head.write("NUMPY", 1, "ascii");
	head[6] = 1;
	head[7] = 0;
	head.writeUInt16LE(header.length, 8);
	head.write(header, 10, "ascii");

	const count = shape.reduce((a, b) => a * b, 1);
	let body: Buffer;
	if (descr === "<f4") {
		body = Buffer.alloc(count * 4);
		for (let i = 0; i < count; i++) body.writeFloatLE(Number(values[i]), i * 4);
	} else if (descr === "<f8") {
		body = Buffer.alloc(count * 8);
		for (let i = 0; i < count; i++) body.writeDoubleLE(Number(values[i]), i * 8);
	} else if (descr === "<i4") {
		body = Buffer.alloc(count * 4);
		for (let i = 0; i < count; i++) body.writeInt32LE(Number(values[i]), i * 4);
	} else if (descr === "<i8") {
		body = Buffer.alloc(count * 8);
		for (let i = 0; i < count; i++) body.writeBigInt64LE(BigInt(values[i]), i * 8);
	} else {
		throw new Error(`fixture dtype ${descr} not supported`);
	}
	return Buffer.concat([head, body]);
}

/** Minimal zip writer (stored or deflated entries). */
export function buildZip(entries: Record<string, Buffer>, deflate = false): Buffer {
	const locals: Buffer[] = [];
	const centrals: Buffer[] = [];
	let offset = 0;
	for (const [name, data] of Object.entries(entries)) {
		const nameBuf = Buffer.from(name, "utf8");
		const payload = deflate ? zlib.deflateRawSync(data) : data;
		const method = deflate ? 8 : 0;
		const crc = zlib.crc32 ? zlib.crc32(data) : 0;

		const local = Buffer.alloc(30);
		local.writeUInt32LE(0x04034b50, 0);
		local.writeUInt16LE(20, 4);
		local.writeUInt16LE(method, 8);
		local.writeUInt32LE(crc >>> 0, 14);
		local.writeUInt32LE(payload.length, 18);
		local.writeUInt32LE(data.length, 22);
		local.writeUInt16LE(nameBuf.length, 26);
		locals.push(local, nameBuf, payload);

		const central = Buffer.alloc(46);
		central.writeUInt32LE(0x02014b50, 0);
		central.writeUInt16LE(20, 4);
		central.writeUInt16LE(20, 6);
		central.writeUInt16LE(method, 10);
		central.writeUInt32LE(crc >>> 0, 16);
		central.writeUInt32LE(payload.length, 20);
		central.writeUInt32LE(data.length, 24);
		central.writeUInt16LE(nameBuf.length, 28);
		central.writeUInt32LE(offset, 42);
		centrals.push(central, nameBuf);
		offset += 30 + nameBuf.length + payload.length;
	}
	const centralStart = offset;
	const centralSize = centrals.reduce((a, b) => a + b.length, 0);
	const eocd = Buffer.alloc(22);
	eocd.writeUInt32LE(0x06054b50, 0);
	eocd.writeUInt16LE(Object.keys(entries).length, 8);
	eocd.writeUInt16LE(Object.keys(entries).length, 10);
	eocd.writeUInt32LE(centralSize, 12);
	eocd.writeUInt32LE(centralStart, 16);
	return Buffer.concat([...locals, ...centrals, eocd]);
}

/** A tiny cora-style dataset: 6 papers, 4 features, 2 classes, 6 cite lines
 * (one duplicate, one reciprocal, one self-loop, one dangling). */
export function tinyLinqs(): { content: string; cites: string } {
	const content = [
		"p0 1 0 0 1 genetic",
		"p1 0 1 0 0 neural",
		"p2 1 1 0 0 genetic",
		"p3 0 0 1 0 neural",
		"p4 0 0 0 1 neural",
		"p5 1 0 1 0 genetic",
	].join("\n");
	const cites = [
		"p0 p1",
		"p1 p0", // reciprocal of the first link
		"p0 p1", // duplicate
		"p2 p2", // self-loop
		"p3 p4",
		"p5 p404", // dangling reference
	].join("\n");
	return { content, cites };
}
