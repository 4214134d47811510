package com.acme;

import java.util.function.IntPredicate;

/**
 * Source side of six_methods.xml. flush() is absent from the report and
 * lambda$parse$0 is absent from the source.
 */
public class Parser {
    private int pos;

    public int parse(String text) {
        int n = 0;
        for (char c : text.toCharArray()) {
            if (c == ',') {
                n++;
            }
        }
        IntPredicate digit = ch -> ch >= '0' && ch <= '9';
        return digit.test(text.charAt(0)) ? n : -n;
    }

    public void reset() {
        pos = 0;
    }

    public void close() {
    }

    public boolean accept(int x) {
        return x > pos;
    }

    public boolean accept(long x) {
        return x > pos && x < Long.MAX_VALUE;
    }

    public void flush() {
        pos = -1;
    }
}
