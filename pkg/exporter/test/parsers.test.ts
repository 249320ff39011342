import { describe, expect, it } from "vitest";

import { readNpy, readNpz } from "../src/npz.js";
import { parseLinqs, parseNpzGraph, parsePubmed } from "../src/parsers.js";
import { readTar, tarEntry } from "../src/tar.js";
import { FormatError } from "../src/types.js";
import { buildNpy, buildTar, buildTgz, buildZip, tinyLinqs } from "./fixtures.js";

describe("tar reader", () => {
	it("round-trips plain and gzipped archives", () => {
		const entries = { "dir/a.txt": "hello", "b.bin": Buffer.from([1, 2, 3]) };
		for (const archive of [buildTar(entries), buildTgz(entries)]) {
			const read = readTar(archive);
			expect(read.get("dir/a.txt")!.toString()).toBe("hello");
			expect([...read.get("b.bin")!]).toEqual([1, 2, 3]);
		}
	});

	it("finds entries by suffix", () => {
		const read = readTar(buildTar({ "cora/cora.content": "x" }));
		expect(tarEntry(read, "cora.content").toString()).toBe("x");
		expect(() => tarEntry(read, "missing.file")).toThrow(FormatError);
	});
});

describe("npy/npz reader", () => {
	it("parses float32 and int64 arrays", () => {
		const f = readNpy(buildNpy("<f4", [2, 2], [1.5, -2, 0, 3.25]));
		expect(f.shape).toEqual([2, 2]);
		expect([...(f.data as Float32Array)]).toEqual([1.5, -2, 0, 3.25]);
		const i = readNpy(buildNpy("<i8", [3], [1n, -4n, 7n]));
		expect([...(i.data as BigInt64Array)]).toEqual([1n, -4n, 7n]);
	});

	it("reads stored and deflated npz members", () => {
		const entries = {
			"a.npy": buildNpy("<i4", [2], [5, 6]),
			"b.npy": buildNpy("<f4", [1], [9]),
		};
		for (const deflate of [false, true]) {
			const arrays = readNpz(buildZip(entries, deflate));
			expect([...(arrays.get("a")!.data as Int32Array)]).toEqual([5, 6]);
			expect([...(arrays.get("b")!.data as Float32Array)]).toEqual([9]);
		}
	});

	it("rejects non-npy payloads", () => {
		expect(() => readNpy(Buffer.from("nope"))).toThrow(FormatError);
	});
});

describe("linqs parser", () => {
	it("parses papers, sorted label mapping, and drops dangling cites", () => {
		const { content, cites } = tinyLinqs();
		const parsed = parseLinqs(content, cites);
		expect(parsed.numNodes).toBe(6);
		expect(parsed.numFeatures).toBe(4);
		expect(parsed.numClasses).toBe(2);
		// "genetic" < "neural" in sorted order
		expect([...parsed.labels]).toEqual([0, 1, 0, 1, 1, 0]);
		expect(parsed.links.length).toBe(5); // 6 lines, 1 dangling
		expect(parsed.droppedLinks).toBe(1);
		expect(parsed.sourceLinks).toBe(6);
		expect(parsed.features[0]).toBe(1);
		expect(parsed.features[1]).toBe(0);
	});
});

describe("pubmed parser", () => {
	const nodes = [
		"NODE\tpaper",
		"cat=label:label\tnumeric:w-alpha:0.0\tnumeric:w-beta:0.0\tnumeric:w-gamma:0.0\tstring:summary:string",
		"1001\tlabel=1\tw-beta=0.5\tsummary=x",
		"1002\tlabel=3\tw-alpha=0.25\tw-gamma=1.0\tsummary=y",
		"1003\tlabel=2\tsummary=z",
	].join("\n");
	const cites = [
		"DIRECTED",
		"NO_FEATURES",
		"0\tpaper:1001\t|\tpaper:1002",
		"1\tpaper:1002\t|\tpaper:1003",
		"2\tpaper:1001\t|\tpaper:9999",
	].join("\n");

	it("maps vocabulary order, 1-based labels, and dangling cites", () => {
		const parsed = parsePubmed(nodes, cites);
		expect(parsed.numNodes).toBe(3);
		expect(parsed.numFeatures).toBe(3);
		expect(parsed.numClasses).toBe(3);
		expect([...parsed.labels]).toEqual([0, 2, 1]);
		// row 0: only w-beta at column 1
		expect([...parsed.features.slice(0, 3)]).toEqual([0, 0.5, 0]);
		expect([...parsed.features.slice(3, 6)]).toEqual([0.25, 0, 1.0]);
		expect(parsed.links.length).toBe(2);
		expect(parsed.droppedLinks).toBe(1);
	});
});

describe("npz graph parser", () => {
	it("expands CSR adjacency and attributes", () => {
		// 3 nodes, edges 0-1 and 1-2 stored symmetrically
		const arrays = readNpz(buildZip({
			"adj_shape.npy": buildNpy("<i8", [2], [3n, 3n]),
			"adj_indptr.npy": buildNpy("<i4", [4], [0, 1, 3, 4]),
			"adj_indices.npy": buildNpy("<i4", [4], [1, 0, 2, 1]),
			"adj_data.npy": buildNpy("<f4", [4], [1, 1, 1, 1]),
			"attr_shape.npy": buildNpy("<i8", [2], [3n, 2n]),
			"attr_indptr.npy": buildNpy("<i4", [4], [0, 1, 1, 2]),
			"attr_indices.npy": buildNpy("<i4", [2], [0, 1]),
			"attr_data.npy": buildNpy("<f4", [2], [0.5, 2.0]),
			"labels.npy": buildNpy("<i8", [3], [0n, 1n, 1n]),
		}));
		const parsed = parseNpzGraph(arrays);
		expect(parsed.numNodes).toBe(3);
		expect(parsed.numFeatures).toBe(2);
		expect(parsed.numClasses).toBe(2);
		expect(parsed.links).toEqual([[0, 1], [1, 0], [1, 2], [2, 1]]);
		expect(parsed.sourceLinks).toBe(2);
		expect([...parsed.features]).toEqual([0.5, 0, 0, 0, 0, 2.0]);
	});
});
